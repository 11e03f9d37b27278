"""Compare the compiled and numpy measurement kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Times h(x) + H(x) for the full hybrid plan (PMU at every bus) and one
Gauss-Newton estimate per backend on each bundled case.
"""
import argparse
import timeit

from gridstate import kernels
from gridstate.estimator import wls_estimate
from gridstate.measurements import MeasurementModel, hybrid_plan, simulate_measurements
from gridstate.network import load_case


def bench(case: str, repeat: int) -> None:
    net, x = load_case(case)
    plan = hybrid_plan(net, net.bus_ids)
    model = MeasurementModel.build(net, plan.kinds)
    z = simulate_measurements(net, x, plan, seed=0, model=model)
    times = {}
    for name in sorted(kernels.BACKENDS):
        kernels.BACKEND = name  # module default picks the kernel used inside the estimator
        t_eval = min(timeit.repeat(lambda: model.evaluate_with_jacobian(x, backend=name), number=repeat, repeat=5))
        t_est = min(timeit.repeat(lambda: wls_estimate(net, z, model=model), number=max(1, repeat // 10), repeat=5))
        times[name] = (t_eval / repeat, t_est / max(1, repeat // 10))
    print(f"{case}: {len(plan)} rows x {2 * net.n_bus} columns")
    for name, (te, tw) in times.items():
        print(f"  {name:<7} h+H {te * 1e6:9.1f} us   estimate {tw * 1e3:7.3f} ms")
    if "cython" in times:
        print(f"  speed-up h+H x{times['python'][0] / times['cython'][0]:.1f}, "
              f"estimate x{times['python'][1] / times['cython'][1]:.1f}")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    args = p.parse_args()
    default = kernels.BACKEND
    try:
        for case in ("ieee14", "ieee30"):
            bench(case, args.repeat)
    finally:
        kernels.BACKEND = default


if __name__ == "__main__":
    main()
