"""Weighted least-squares state estimation.

Two solvers share one result type:

* ``wls_estimate``: Gauss-Newton on the polar state (conventional, hybrid
  or PMU-only measurement sets);
* ``linear_pmu_estimate``: a single normal-equation solve on rectangular
  voltages, valid when every row is a PMU voltage or current component.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .measurements import MeasurementModel, MeasurementPlan, MeasurementSet
from .network import Network, PolarState, RectangularState


class UnobservableError(ValueError):
    """The gain matrix is singular: the measurements do not determine the state."""

    def __init__(self, message: str, unreached_buses: tuple[int, ...] = ()):
        super().__init__(message)
        self.unreached_buses = unreached_buses


@dataclass(frozen=True)
class SolverOptions:
    epsilon: float = 1e-6
    max_iterations: int = 25
    # None: pin the slack angle unless every measurement comes from a PMU
    pin_slack: bool | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class EstimationResult:
    state: PolarState
    iterations: int
    converged: bool
    objective: float
    residuals: np.ndarray = field(repr=False)
    max_step: float
    objective_history: tuple[float, ...] = ()
    method: str = "gauss-newton"

    def errors(self, x_true: PolarState) -> tuple[np.ndarray, np.ndarray]:
        return self.state.v_mag - x_true.v_mag, self.state.v_ang - x_true.v_ang

    def max_error(self, x_true: PolarState) -> float:
        dv, da = self.errors(x_true)
        return float(max(np.abs(dv).max(), np.abs(da).max()))

    def to_csv(self, path: str | Path, net: Network, x_true: PolarState | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bus", "v_mag_est", "v_ang_est_rad", "v_mag_true", "v_ang_true"])
            for k, bus in enumerate(net.buses):
                true = ("", "") if x_true is None else (repr(float(x_true.v_mag[k])), repr(float(x_true.v_ang[k])))
                w.writerow([bus.id, repr(float(self.state.v_mag[k])), repr(float(self.state.v_ang[k])), *true])
            fh.write(
                f"# iterations={self.iterations},objective={self.objective!r},"
                f"converged={str(self.converged).lower()},method={self.method}\n"
            )


def objective(net: Network, x: PolarState, z: MeasurementSet) -> float:
    """Weighted sum of squared residuals, J(x)."""
    if not len(z):
        raise ValueError("measurement set is empty")
    r = z.values - MeasurementModel.build(net, z.kinds).evaluate(x)
    return float(np.sum((r / z.sigmas) ** 2))


def _solve_gain(G: np.ndarray, rhs: np.ndarray, describe) -> np.ndarray:
    """Solve ``G dx = rhs`` for symmetric positive definite ``G``.

    ``G`` is Jacobi-scaled before the Cholesky factorisation so the rank test
    is insensitive to the spread of measurement weights.
    """
    d = np.diag(G).copy()
    if np.any(d <= 0.0):
        raise UnobservableError(*describe(np.flatnonzero(d <= 0.0)))
    s = 1.0 / np.sqrt(d)
    Gs = G * s[:, None] * s[None, :]
    try:
        c, low = scipy.linalg.cho_factor(Gs, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise UnobservableError(*describe(np.array([], dtype=int))) from None
    piv = np.diag(c) ** 2
    if piv.min() < 1e-12:
        raise UnobservableError(*describe(np.flatnonzero(piv < 1e-12)))
    return s * scipy.linalg.cho_solve((c, low), rhs * s, check_finite=False)


def _polar_describe(net: Network, pinned: bool):
    n = net.n_bus
    ids = net.bus_ids
    free = [k for k in range(n) if not (pinned and k == net.slack)]

    def describe(cols):
        buses = set()
        for c in cols:
            c = int(c)
            buses.add(ids[free[c]] if c < len(free) else ids[c - len(free)])
        buses = tuple(sorted(buses))
        msg = "measurement set is not observable (gain matrix is singular)"
        if buses:
            msg += f"; unresolved buses: {', '.join(map(str, buses))}"
        return msg, buses

    return describe


def gauss_newton(
    model: MeasurementModel,
    z: np.ndarray,
    sigma: np.ndarray,
    x0: PolarState,
    opts: SolverOptions,
    pin_slack: bool = True,
) -> EstimationResult:
    """Array-level Gauss-Newton loop used by ``wls_estimate`` and the Monte Carlo driver."""
    w = 1.0 / sigma**2
    x = x0
    describe = _polar_describe(model.net, pin_slack)
    history: list[float] = []
    max_step = np.inf
    converged = False
    it = 0
    while it < opts.max_iterations:
        h, H = model.evaluate_with_jacobian(x, full=not pin_slack)
        r = z - h
        history.append(float(r @ (w * r)))
        WH = H * w[:, None]
        dx = _solve_gain(H.T @ WH, WH.T @ r, describe)
        if pin_slack:
            x = x.with_vector(x.to_vector() + dx)
        else:
            n = x.n_bus
            x = PolarState(x.v_mag + dx[n:], x.v_ang + dx[:n], x.slack)
        it += 1
        max_step = float(np.abs(dx).max())
        if max_step < opts.epsilon:
            converged = True
            break
    r = z - model.evaluate(x)
    return EstimationResult(
        state=x,
        iterations=it,
        converged=converged,
        objective=float(r @ (w * r)),
        residuals=r,
        max_step=max_step,
        objective_history=tuple(history),
    )


def wls_estimate(
    net: Network,
    z: MeasurementSet,
    x0: PolarState | None = None,
    opts: SolverOptions | None = None,
    model: MeasurementModel | None = None,
) -> EstimationResult:
    """Iterative WLS estimate of the polar state, starting from ``x0`` (flat start by default).

    Raises ``UnobservableError`` when the gain matrix is singular. A run that
    exhausts ``max_iterations`` is returned with ``converged=False``.
    """
    opts = opts or SolverOptions()
    if not len(z):
        raise ValueError("measurement set is empty")
    if x0 is None:
        x0 = PolarState.flat(net.n_bus, net.slack, net.buses[net.slack].ref_v_ang)
    pin = opts.pin_slack if opts.pin_slack is not None else not z.is_pmu_only()
    if model is None:
        model = MeasurementModel.build(net, z.kinds)
    return gauss_newton(model, z.values, z.sigmas, x0, opts, pin)


def _rect_unreached(net: Network, H: np.ndarray) -> tuple[int, ...]:
    n = net.n_bus
    touched = np.any(H[:, :n] != 0, axis=0) | np.any(H[:, n:] != 0, axis=0)
    return tuple(net.bus_ids[k] for k in np.flatnonzero(~touched))


def linear_solve(net: Network, H: np.ndarray, z: np.ndarray, sigma: np.ndarray) -> EstimationResult:
    w = 1.0 / sigma**2
    WH = H * w[:, None]
    n = net.n_bus
    ids = net.bus_ids

    def describe(cols):
        buses = _rect_unreached(net, H) or tuple(sorted({ids[int(c) % n] for c in cols}))
        msg = "PMU measurements do not observe every bus"
        if buses:
            msg += f"; unreached buses: {', '.join(map(str, buses))}"
        return msg, buses

    x = _solve_gain(H.T @ WH, WH.T @ z, describe)
    r = z - H @ x
    state = RectangularState.from_vector(x).to_polar(net.slack)
    J = float(r @ (w * r))
    return EstimationResult(
        state=state,
        iterations=1,
        converged=True,
        objective=J,
        residuals=r,
        max_step=0.0,
        objective_history=(J,),
        method="linear",
    )


def linear_pmu_estimate(
    net: Network,
    z: MeasurementSet,
    opts: SolverOptions | None = None,
    model: MeasurementModel | None = None,
) -> EstimationResult:
    """Non-iterative estimate from rectangular PMU rows (E, F, C, D).

    The measurement functions are linear in ``[E, F]``, so the WLS solution
    is one normal-equation solve; ``iterations`` is reported as 1.
    """
    if not z.is_rectangular_pmu():
        raise ValueError("linear estimation needs PMU voltage/current components in rectangular form only")
    if model is None:
        model = MeasurementModel.build(net, z.kinds)
    return linear_solve(net, model.rectangular_jacobian(), z.values, z.sigmas)


def observability_rank(net: Network, plan: MeasurementPlan) -> tuple[int, bool]:
    """Numerical rank of the measurement Jacobian and whether it equals the number of free coordinates.

    Rectangular PMU plans are checked over ``[E, F]`` (2N coordinates);
    other plans over the polar state at flat start, with the slack angle
    removed unless the plan is PMU-only.
    """
    if not len(plan):
        raise ValueError("measurement plan is empty")
    model = MeasurementModel.build(net, plan.kinds)
    if plan.is_rectangular:
        H = model.rectangular_jacobian()
    else:
        x = PolarState.flat(net.n_bus, net.slack)
        H = model.evaluate_with_jacobian(x, full=plan.is_pmu_only)[1]
    norms = np.linalg.norm(H, axis=0)
    Hs = H / np.where(norms > 0, norms, 1.0)
    rank = int(np.linalg.matrix_rank(Hs))
    return rank, rank == H.shape[1]
