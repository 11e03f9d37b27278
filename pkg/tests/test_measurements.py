import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridstate import kernels
from gridstate.measurements import (
    DEFAULT_NOISE,
    MeasType,
    MeasurementConfigError,
    MeasurementKind,
    MeasurementModel,
    MeasurementSet,
    NoiseSpec,
    conventional_plan,
    evaluate_h,
    hybrid_plan,
    jacobian_row,
    noise_slot,
    pmu_plan,
    simulate_measurements,
)
from gridstate.network import PolarState

BRANCH_TYPES = (MeasType.P_FLOW, MeasType.Q_FLOW, MeasType.I_REAL, MeasType.I_IMAG)
BUS_TYPES = tuple(t for t in MeasType if t not in BRANCH_TYPES)


def all_kinds(net):
    kinds = [MeasurementKind(t, i) for t in BUS_TYPES for i in net.bus_ids]
    kinds += [MeasurementKind(t, k, s) for t in BRANCH_TYPES for k in range(net.n_branch) for s in ("from", "to")]
    return kinds


def random_state(net, rng):
    return PolarState(rng.uniform(0.9, 1.1, net.n_bus), rng.uniform(-0.5, 0.5, net.n_bus), net.slack)


def complex_oracle(net, x, kind):
    """Reference values from complex phasor arithmetic."""
    v = x.complex_voltage()
    if not kind.type.on_branch:
        k = net.bus_index(kind.location)
        s = v * np.conj(net.ybus() @ v)
        return {
            MeasType.P_INJECTION: s[k].real,
            MeasType.Q_INJECTION: s[k].imag,
            MeasType.V_MAGNITUDE: abs(v[k]),
            MeasType.V_ANGLE: x.v_ang[k],
            MeasType.V_REAL: v[k].real,
            MeasType.V_IMAG: v[k].imag,
        }[kind.type]
    br = net.branches[kind.location]
    i, j = net.bus_index(br.from_bus), net.bus_index(br.to_bus)
    ysh = complex(br.shunt_g_from, br.shunt_b_from) if kind.side == "from" else complex(br.shunt_g_to, br.shunt_b_to)
    if kind.side == "to":
        i, j = j, i
    y = br.series_admittance
    cur = (y + ysh) * v[i] - y * v[j]
    s = v[i] * np.conj(cur)
    return {MeasType.P_FLOW: s.real, MeasType.Q_FLOW: s.imag, MeasType.I_REAL: cur.real, MeasType.I_IMAG: cur.imag}[
        kind.type
    ]


def test_all_kinds_match_complex_oracle(bundled, rng):
    net, x = bundled
    kinds = all_kinds(net)
    model = MeasurementModel.build(net, kinds)
    for state in (x, random_state(net, rng)):
        h = model.evaluate(state)
        ref = np.array([complex_oracle(net, state, k) for k in kinds])
        np.testing.assert_allclose(h, ref, rtol=0, atol=1e-12)


def test_flat_state_branch_flows(ieee14):
    net, _ = ieee14
    flat = PolarState.flat(net.n_bus)
    for k, br in enumerate(net.branches):
        if br.tap_ratio != 1.0:
            continue
        p = evaluate_h(net, flat, MeasurementKind(MeasType.P_FLOW, k, "from"))
        q = evaluate_h(net, flat, MeasurementKind(MeasType.Q_FLOW, k, "from"))
        assert p == pytest.approx(0.0, abs=1e-14)
        assert q == pytest.approx(-br.shunt_b_from, abs=1e-14)


def test_current_components_branch_1_2(ieee14):
    net, x = ieee14
    br = net.branches[0]
    assert (br.from_bus, br.to_bus) == (1, 2)
    v = x.complex_voltage()
    y = br.series_admittance
    cur = (y + 1j * br.shunt_b_from) * v[0] - y * v[1]
    c = evaluate_h(net, x, MeasurementKind(MeasType.I_REAL, 0, "from"))
    d = evaluate_h(net, x, MeasurementKind(MeasType.I_IMAG, 0, "from"))
    assert c == pytest.approx(cur.real, abs=1e-12)
    assert d == pytest.approx(cur.imag, abs=1e-12)


def test_polar_and_rectangular_current_forms_agree(bundled, rng):
    net, _ = bundled
    x = random_state(net, rng)
    plan = pmu_plan(net, net.bus_ids, rectangular=True)
    model = MeasurementModel.build(net, plan.kinds)
    linear = model.rectangular_jacobian() @ x.to_rectangular().to_vector()
    np.testing.assert_allclose(model.evaluate(x), linear, rtol=0, atol=1e-12)


def test_rectangular_jacobian_rejects_power_rows(ieee14):
    net, _ = ieee14
    model = MeasurementModel.build(net, [MeasurementKind(MeasType.P_INJECTION, 1)])
    with pytest.raises(MeasurementConfigError):
        model.rectangular_jacobian()


def _fd_jacobian(model, x, step=1e-6):
    n = x.n_bus
    J = np.zeros((len(model), 2 * n))
    for c in range(2 * n):
        d = np.zeros(2 * n)
        d[c] = step
        up = PolarState(x.v_mag + d[n:], x.v_ang + d[:n], x.slack)
        dn = PolarState(x.v_mag - d[n:], x.v_ang - d[:n], x.slack)
        J[:, c] = (model.evaluate(up) - model.evaluate(dn)) / (2 * step)
    return J


def test_jacobian_matches_finite_differences(ieee14, rng):
    net, _ = ieee14
    model = MeasurementModel.build(net, all_kinds(net))
    for _ in range(50):
        x = random_state(net, rng)
        _, H = model.evaluate_with_jacobian(x, full=True)
        J = _fd_jacobian(model, x)
        scale = np.maximum(1.0, np.abs(H))
        assert np.max(np.abs(H - J) / scale) < 1e-6


def test_jacobian_drops_slack_column(ieee30, rng):
    net, _ = ieee30
    x = random_state(net, rng)
    model = MeasurementModel.build(net, conventional_plan(net).kinds)
    _, full = model.evaluate_with_jacobian(x, full=True)
    _, red = model.evaluate_with_jacobian(x)
    assert red.shape[1] == 2 * net.n_bus - 1
    np.testing.assert_array_equal(red, np.delete(full, net.slack, axis=1))


def test_vmag_row_is_unit_vector(ieee14, rng):
    net, _ = ieee14
    x = random_state(net, rng)
    for bus_id in (1, 7, 14):
        row = jacobian_row(net, x, MeasurementKind(MeasType.V_MAGNITUDE, bus_id))
        expected = np.zeros(2 * net.n_bus - 1)
        expected[net.n_bus - 1 + net.bus_index(bus_id)] = 1.0
        np.testing.assert_array_equal(row, expected)


def test_current_derivative_wrt_far_magnitude(ieee14, rng):
    """dC/dV_m = -|Y| cos(theta_m + phi) with Y = g + jb the series admittance, phi its angle."""
    net, _ = ieee14
    for trial in range(5):
        x = random_state(net, rng) if trial else PolarState.flat(net.n_bus)
        for k, br in enumerate(net.branches):
            m = net.bus_index(br.to_bus)
            _, H = MeasurementModel.build(net, [MeasurementKind(MeasType.I_REAL, k, "from")]).evaluate_with_jacobian(
                x, full=True
            )
            y = br.series_admittance
            assert H[0, net.n_bus + m] == pytest.approx(-abs(y) * np.cos(x.v_ang[m] + np.angle(y)), abs=1e-12)


def test_injections_sum_to_losses(bundled, rng):
    net, _ = bundled
    x = random_state(net, rng)
    inj = MeasurementModel.build(net, [MeasurementKind(MeasType.P_INJECTION, i) for i in net.bus_ids]).evaluate(x)
    ends = [MeasurementKind(MeasType.P_FLOW, k, s) for k in range(net.n_branch) for s in ("from", "to")]
    flows = MeasurementModel.build(net, ends).evaluate(x)
    v2 = x.v_mag**2
    shunt = sum(bus.shunt_g * v2[k] for k, bus in enumerate(net.buses))
    assert inj.sum() == pytest.approx(flows.sum() + shunt, abs=1e-10)


@pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="compiled kernel not built")
def test_backends_agree(bundled, rng):
    net, _ = bundled
    model = MeasurementModel.build(net, all_kinds(net))
    for _ in range(10):
        x = random_state(net, rng)
        hc, Hc = model.evaluate_with_jacobian(x, full=True, backend="cython")
        hp, Hp = model.evaluate_with_jacobian(x, full=True, backend="python")
        np.testing.assert_allclose(hc, hp, rtol=0, atol=1e-13)
        np.testing.assert_allclose(Hc, Hp, rtol=0, atol=1e-12)


def test_unknown_backend(ieee14):
    net, x = ieee14
    with pytest.raises(KeyError):
        MeasurementModel.build(net, conventional_plan(net).kinds).evaluate(x, backend="fortran")


def test_kind_validation():
    with pytest.raises(MeasurementConfigError):
        MeasurementKind(MeasType.P_FLOW, 0)
    with pytest.raises(MeasurementConfigError):
        MeasurementKind(MeasType.P_INJECTION, 1, "from")
    assert MeasurementKind(MeasType.V_ANGLE, 3).pmu


def test_unknown_locations(ieee14):
    net, x = ieee14
    with pytest.raises(KeyError):
        evaluate_h(net, x, MeasurementKind(MeasType.P_INJECTION, 99))
    with pytest.raises(KeyError):
        evaluate_h(net, x, MeasurementKind(MeasType.P_FLOW, 20, "to"))


def test_plan_sizes(ieee14):
    net, _ = ieee14
    conv = conventional_plan(net)
    assert len(conv) == 3 * 14 + 4 * 20
    pmu = pmu_plan(net, [4])
    degree = len(net.incident_branches(net.bus_index(4)))
    assert len(pmu) == 2 + 2 * degree
    assert pmu.is_pmu_only and not pmu.is_rectangular
    assert pmu_plan(net, [4], rectangular=True).is_rectangular
    assert len(hybrid_plan(net, [4, 6])) == len(conv) + len(pmu_plan(net, [4, 6]))
    with pytest.raises(KeyError):
        pmu_plan(net, [15])


def test_zero_noise_gives_exact_values(ieee30):
    net, x = ieee30
    plan = hybrid_plan(net, [6, 10])
    z = simulate_measurements(net, x, plan, NoiseSpec(0, 0, 0, 0), seed=3)
    exact = MeasurementModel.build(net, plan.kinds).evaluate(x)
    np.testing.assert_array_equal(z.values, exact)
    # weights fall back to the default sigmas
    np.testing.assert_array_equal(z.sigmas, [DEFAULT_NOISE.sigma_for(k) for k in plan.kinds])


def test_same_seed_same_measurements(ieee14):
    net, x = ieee14
    plan = hybrid_plan(net, [4])
    a = simulate_measurements(net, x, plan, seed=11)
    b = simulate_measurements(net, x, plan, seed=11)
    c = simulate_measurements(net, x, plan, seed=12)
    assert a == b
    assert a != c


def test_noise_is_common_across_plans(ieee14):
    net, x = ieee14
    conv = simulate_measurements(net, x, conventional_plan(net), seed=5)
    hyb = simulate_measurements(net, x, hybrid_plan(net, [4, 6, 9]), seed=5)
    np.testing.assert_array_equal(conv.values, hyb.values[: len(conv)])


def test_noise_slots_unique(ieee14):
    net, _ = ieee14
    kinds = all_kinds(net) + list(hybrid_plan(net, net.bus_ids).kinds)
    slots = {noise_slot(net, k): k for k in kinds}
    assert len(slots) == len(set(kinds))


def test_sample_std_matches_sigma(ieee14):
    net, x = ieee14
    kind = MeasurementKind(MeasType.P_FLOW, 3, "to")
    plan = conventional_plan(net)
    row = plan.kinds.index(kind)
    model = MeasurementModel.build(net, plan.kinds)
    exact = model.evaluate(x)[row]
    draws = np.array([simulate_measurements(net, x, plan, seed=s, model=model).values[row] for s in range(10_000)])
    assert abs(draws.std(ddof=1) / DEFAULT_NOISE.power - 1.0) < 0.03
    assert abs(draws.mean() - exact) < 4 * DEFAULT_NOISE.power / 100


def test_measurement_csv_roundtrip(tmp_path, ieee14):
    net, x = ieee14
    z = simulate_measurements(net, x, hybrid_plan(net, [4]), seed=1)
    path = tmp_path / "z.csv"
    z.to_csv(path)
    back = MeasurementSet.from_csv(path)
    assert back.kinds == z.kinds
    np.testing.assert_array_equal(back.values, z.values)
    np.testing.assert_array_equal(back.sigmas, z.sigmas)


def test_empty_plan_rejected(ieee14):
    from gridstate.measurements import MeasurementPlan

    net, x = ieee14
    with pytest.raises(MeasurementConfigError):
        simulate_measurements(net, x, MeasurementPlan(()))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_flow_sign_symmetry_lossless(seed):
    """On a lossless branch without shunts, P_from = -P_to for any state."""
    from gridstate.network import Branch, Bus, BusKind, Network

    rng = np.random.default_rng(seed)
    net = Network(
        (Bus(1, 1.0, BusKind.SLACK, 1.0, 0.0), Bus(2, 1.0, BusKind.PQ, 1.0, 0.0)),
        (Branch.from_impedance(1, 2, 0.0, rng.uniform(0.01, 0.5)),),
    )
    x = PolarState(rng.uniform(0.8, 1.2, 2), rng.uniform(-1, 1, 2))
    pf = evaluate_h(net, x, MeasurementKind(MeasType.P_FLOW, 0, "from"))
    pt = evaluate_h(net, x, MeasurementKind(MeasType.P_FLOW, 0, "to"))
    assert pf == pytest.approx(-pt, abs=1e-12)


def test_pure_python_switch():
    import os
    import subprocess
    import sys

    code = (
        "from gridstate import kernels; from gridstate.measurements import *; from gridstate.estimator import *;"
        "from gridstate.network import load_case; net, x = load_case('ieee14');"
        "z = simulate_measurements(net, x, conventional_plan(net), NoiseSpec(0, 0, 0, 0));"
        "print(kernels.BACKEND, sorted(kernels.BACKENDS), wls_estimate(net, z).max_error(x) < 1e-8)"
    )
    env = dict(os.environ, GRIDSTATE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    assert out.split() == ["python", "['python']", "True"]
