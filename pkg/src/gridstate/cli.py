"""Command-line interface: ``estimate``, ``suite``, ``placement`` and ``rank``.

Option values are resolved as: command-line flag, then ``--config`` JSON
file, then built-in defaults. The seed additionally falls back to the
``GRIDSTATE_SEED`` environment variable before the default of 0.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .estimator import SolverOptions, UnobservableError, linear_pmu_estimate, observability_rank, wls_estimate
from .measurements import (
    DEFAULT_NOISE,
    MeasurementConfigError,
    MeasurementSet,
    NoiseSpec,
    conventional_plan,
    hybrid_plan,
    pmu_plan,
    simulate_measurements,
)
from .montecarlo import (
    DEFAULT_FRACTIONS,
    CaseAborted,
    PlacementError,
    build_cases,
    format_table,
    observable_placement,
    place_pmus,
    pmu_count,
    run_suite,
    write_per_bus_sd,
    write_suite_report,
)
from .network import NetworkDataError, NetworkFormatError, load_case

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    cases: list[str] = field(default_factory=list)
    trials: int = 1000
    seed: int = 0
    epsilon: float = 1e-6
    max_iterations: int = 25
    sigma_power: float = DEFAULT_NOISE.power
    sigma_vmag: float = DEFAULT_NOISE.vmag
    sigma_pmu: float = DEFAULT_NOISE.pmu
    sigma_pmu_angle: float = DEFAULT_NOISE.pmu_angle
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    out: str = "out"
    jobs: int = 1
    plan: str = "full"
    pmus: str = "auto"
    only_pmus: str = "all"
    measurements: str | None = None

    def validate(self) -> "RunConfig":
        for name in ("sigma_power", "sigma_vmag", "sigma_pmu", "sigma_pmu_angle"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name.replace('_', '-')} must be >= 0")
        if self.trials <= 0:
            raise ConfigError("trials must be > 0")
        if self.jobs <= 0:
            raise ConfigError("jobs must be > 0")
        if self.epsilon <= 0 or self.max_iterations <= 0:
            raise ConfigError("epsilon and max-iterations must be > 0")
        if any(not 0.0 <= f <= 1.0 for f in self.fractions):
            raise ConfigError("PMU fractions must lie in [0, 1]")
        if not self.cases:
            raise ConfigError("at least one --case is required")
        return self

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.sigma_power, self.sigma_vmag, self.sigma_pmu, self.sigma_pmu_angle)

    @property
    def solver(self) -> SolverOptions:
        return SolverOptions(self.epsilon, self.max_iterations)


def _fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def _common(p: argparse.ArgumentParser, multi_case: bool = False) -> None:
    S = argparse.SUPPRESS
    if multi_case:
        p.add_argument("--case", dest="cases", action="append", default=S, help="case file or bundled name; repeatable")
    else:
        p.add_argument("--case", dest="cases", type=lambda s: [s], default=S, help="case file or bundled name")
    p.add_argument("--config", default=S, help="JSON file with option values")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--epsilon", type=float, default=S)
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=S)
    p.add_argument("--sigma-conv", dest="sigma_conv", type=float, default=S,
                   help="sigma for all conventional meters (power and |V|)")
    p.add_argument("--sigma-power", dest="sigma_power", type=float, default=S)
    p.add_argument("--sigma-vmag", dest="sigma_vmag", type=float, default=S)
    p.add_argument("--sigma-pmu", dest="sigma_pmu", type=float, default=S)
    p.add_argument("--sigma-pmu-angle", dest="sigma_pmu_angle", type=float, default=S)
    p.add_argument("--out", default=S, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="gridstate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run one estimation")
    _common(p)
    p.add_argument("--plan", choices=("full", "hybrid", "pmu-only"), default=S)
    p.add_argument("--pmus", default=S, help="'auto', a count, or comma-separated bus ids")
    p.add_argument("--measurements", default=S, help="measurement CSV to estimate from instead of simulating")

    p = sub.add_parser("suite", help="run the six-case PMU penetration study")
    _common(p, multi_case=True)
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--jobs", type=int, default=S)
    p.add_argument("--fractions", type=_fractions, default=S)
    p.add_argument("--only-pmus", dest="only_pmus", choices=("all", "observable"), default=S)

    p = sub.add_parser("placement", help="print greedy PMU placements")
    _common(p)
    p.add_argument("--fractions", type=_fractions, default=S)
    p.add_argument("--only-pmus", dest="only_pmus", choices=("all", "observable"), default=S)

    p = sub.add_parser("rank", help="observability report for a plan")
    _common(p)
    p.add_argument("--plan", choices=("full", "hybrid", "pmu-only"), default=S)
    p.add_argument("--pmus", default=S)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    env_seed = os.environ.get("GRIDSTATE_SEED")
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"GRIDSTATE_SEED must be an integer, got {env_seed!r}") from None
    given = vars(args)
    if "config" in given:
        try:
            with open(given["config"]) as fh:
                file_values = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {given['config']}") from None
        if "case" in file_values:
            file_values["cases"] = file_values.pop("case")
        if isinstance(file_values.get("cases"), str):
            file_values["cases"] = [file_values["cases"]]
        if isinstance(file_values.get("fractions"), str):
            file_values["fractions"] = _fractions(file_values["fractions"])
        values.update(file_values)
    values.update({k: v for k, v in given.items() if k not in ("command", "config")})
    conv = values.pop("sigma_conv", None)
    if conv is not None:
        for name in ("sigma_power", "sigma_vmag"):
            if name not in given:
                values[name] = conv
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown option(s): {', '.join(sorted(unknown))}")
    if "fractions" in values:
        values["fractions"] = tuple(values["fractions"])
    return RunConfig(**values).validate()


def _pmu_buses(net, spec: str, plan: str) -> list[int]:
    if spec == "auto":
        if plan == "pmu-only":
            return observable_placement(net)
        return place_pmus(net, pmu_count(0.1, net.n_bus))
    if spec.isdigit():
        return place_pmus(net, int(spec))
    try:
        return [int(b) for b in spec.split(",") if b.strip()]
    except ValueError:
        raise ConfigError(f"bad --pmus value {spec!r}") from None


def _plan(net, cfg: RunConfig):
    if cfg.plan == "full":
        return conventional_plan(net)
    buses = _pmu_buses(net, cfg.pmus, cfg.plan)
    if cfg.plan == "hybrid":
        return hybrid_plan(net, buses)
    return pmu_plan(net, buses, rectangular=True)


def cmd_estimate(cfg: RunConfig) -> int:
    name = cfg.cases[0]
    net, x_true = load_case(name)
    if cfg.measurements:
        z = MeasurementSet.from_csv(cfg.measurements)
    else:
        z = simulate_measurements(net, x_true, _plan(net, cfg), cfg.noise, cfg.seed)
    if z.is_rectangular_pmu():
        res = linear_pmu_estimate(net, z)
    else:
        res = wls_estimate(net, z, opts=cfg.solver)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "estimate.csv", net, x_true)
    print(
        f"case={net.name} measurements={len(z)} method={res.method} iterations={res.iterations} "
        f"objective={res.objective:.6g} converged={str(res.converged).lower()} "
        f"max_error={res.max_error(x_true):.3e}"
    )
    return EXIT_OK if res.converged else EXIT_FAILURE


def cmd_suite(cfg: RunConfig) -> int:
    status = EXIT_OK
    for name in cfg.cases:
        net, x_true = load_case(name)
        out = Path(cfg.out) / (net.name or Path(name).stem)
        out.mkdir(parents=True, exist_ok=True)
        done = []

        def flush():
            write_suite_report(done, out / "suite_report.csv")
            write_per_bus_sd(done, net, out / "per_bus_sd.csv")

        try:
            run_suite(
                net, x_true, cfg.trials, cfg.seed, cfg.noise, cfg.fractions, cfg.solver, cfg.jobs,
                cfg.only_pmus, on_report=lambda r: (done.append(r), flush()),
            )
        except CaseAborted as exc:
            flush()
            print(f"{net.name}: {exc}", file=sys.stderr)
            status = EXIT_FAILURE
            continue
        print(f"{net.name} ({cfg.trials} trials, seed {cfg.seed}; angles in radians)")
        print(format_table(done))
        print(f"wrote {out / 'suite_report.csv'} and {out / 'per_bus_sd.csv'}")
    return status


def cmd_placement(cfg: RunConfig) -> int:
    net, _ = load_case(cfg.cases[0])
    for spec in build_cases(net, 1, cfg.seed, cfg.fractions, cfg.only_pmus):
        print(f"{spec.label:<10} ({len(spec.pmu_buses):>2}): {' '.join(map(str, spec.pmu_buses)) or '-'}")
    print(f"{'greedy':<10} ({net.n_bus:>2}): {' '.join(map(str, place_pmus(net, net.n_bus)))}")
    return EXIT_OK


def cmd_rank(cfg: RunConfig) -> int:
    net, _ = load_case(cfg.cases[0])
    plan = _plan(net, cfg)
    rank, ok = observability_rank(net, plan)
    coords = "rectangular" if plan.is_rectangular else "polar"
    print(
        f"case={net.name} plan={cfg.plan} measurements={len(plan)} rank={rank} "
        f"free={2 * net.n_bus - (0 if plan.is_pmu_only else 1)} ({coords}) "
        f"observable={str(ok).lower()}"
    )
    return EXIT_OK if ok else EXIT_FAILURE


COMMANDS = {"estimate": cmd_estimate, "suite": cmd_suite, "placement": cmd_placement, "rank": cmd_rank}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"gridstate: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg)
    except FileNotFoundError as exc:
        print(f"gridstate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnobservableError as exc:
        print(f"gridstate: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (NetworkFormatError, NetworkDataError, MeasurementConfigError, PlacementError, ConfigError) as exc:
        print(f"gridstate: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
