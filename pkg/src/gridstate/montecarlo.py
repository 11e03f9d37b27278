"""Six-case PMU penetration study.

Each case runs repeated noisy estimations and reports, per voltage variable,
the bus-averaged standard deviation of the estimation error. Cases are
normalised to the no-PMU case.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .estimator import SolverOptions, UnobservableError, gauss_newton, linear_solve, observability_rank
from .measurements import (
    DEFAULT_NOISE,
    MeasurementModel,
    MeasurementPlan,
    NoiseSpec,
    hybrid_plan,
    noise_slot,
    pmu_plan,
    standard_normals,
)
from .network import Network, PolarState

CASE_LABELS = ("No PMUs", "10% PMUs", "20% PMUs", "30% PMUs", "40% PMUs", "Only PMUs")
DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.4)
MAX_FAILURE_RATE = 0.01


class PlacementError(ValueError):
    pass


class CaseAborted(RuntimeError):
    def __init__(self, label: str, failed: int, trials: int):
        super().__init__(f"case '{label}': {failed} of {trials} trials failed (limit {MAX_FAILURE_RATE:.0%})")
        self.label = label
        self.failed = failed
        self.trials = trials


# --- placement ---------------------------------------------------------------

def greedy_order(net: Network) -> list[int]:
    """All bus ids in greedy coverage order.

    Each step takes the bus whose closed neighbourhood covers the most
    still-uncovered buses; ties go to the lowest bus id. Prefixes of this
    order are nested placements.
    """
    adj = net.neighbors()
    ids = net.bus_ids
    remaining = sorted(range(net.n_bus), key=lambda k: ids[k])
    covered: set[int] = set()
    order = []
    while remaining:
        best = max(remaining, key=lambda k: (len(({k} | adj[k]) - covered), -ids[k]))
        remaining.remove(best)
        covered |= {best} | adj[best]
        order.append(ids[best])
    return order


def pmu_count(fraction: float, n_bus: int) -> int:
    """Round-half-up of ``fraction * n_bus``."""
    if not 0.0 <= fraction <= 1.0:
        raise PlacementError(f"PMU fraction {fraction} outside [0, 1]")
    return int(math.floor(fraction * n_bus + 0.5 + 1e-9))


def place_pmus(net: Network, count: int) -> list[int]:
    if count < 0 or count > net.n_bus:
        raise PlacementError(f"cannot place {count} PMUs on a {net.n_bus}-bus network")
    return greedy_order(net)[:count]


def observable_placement(net: Network, start: int = 0) -> list[int]:
    """Shortest greedy prefix (at least ``start`` long) that makes a PMU-only plan observable."""
    order = greedy_order(net)
    for count in range(max(start, 1), net.n_bus + 1):
        if observability_rank(net, pmu_plan(net, order[:count], rectangular=True))[1]:
            return order[:count]
    raise PlacementError("network is not observable even with a PMU at every bus")


# --- cases -------------------------------------------------------------------

@dataclass(frozen=True)
class CaseSpec:
    label: str
    pmu_buses: tuple[int, ...]
    plan: MeasurementPlan
    trials: int
    seed: int
    linear: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.linear and not self.plan.is_rectangular:
            raise ValueError("linear cases need a rectangular PMU-only plan")


@dataclass(frozen=True, eq=False)
class CaseReport:
    case: int
    label: str
    pmu_count: int
    avg_sd_vmag: float
    avg_sd_vang: float
    pct_vmag: float = 100.0
    pct_vang: float = 100.0
    failed_trials: int = 0
    trials: int = 0
    sd_vmag: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    sd_vang: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]


def build_cases(
    net: Network,
    trials: int,
    seed: int,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    only_pmus: str = "all",
) -> list[CaseSpec]:
    """No-PMU case, one hybrid case per fraction, and the PMU-only case.

    ``only_pmus="all"`` puts a PMU at every bus for the PMU-only case;
    ``"observable"`` extends the largest hybrid placement along the greedy
    order until the PMU-only plan is observable.
    """
    order = greedy_order(net)
    counts = [pmu_count(f, net.n_bus) for f in fractions]
    specs = [CaseSpec(CASE_LABELS[0], (), hybrid_plan(net, ()), trials, seed)]
    for f, c in zip(fractions, counts):
        buses = tuple(order[:c])
        specs.append(CaseSpec(f"{round(100 * f):d}% PMUs", buses, hybrid_plan(net, buses), trials, seed))
    if only_pmus == "all":
        buses = tuple(order)
    elif only_pmus == "observable":
        buses = tuple(observable_placement(net, start=max(counts, default=0)))
    else:
        raise ValueError(f"unknown PMU-only placement rule {only_pmus!r}")
    specs.append(CaseSpec(CASE_LABELS[-1], buses, pmu_plan(net, buses, rectangular=True), trials, seed, linear=True))
    return specs


@dataclass(frozen=True, eq=False)
class _TrialContext:
    net: Network
    x_true: PolarState
    model: MeasurementModel
    exact: np.ndarray
    sigma_noise: np.ndarray
    sigma_weight: np.ndarray
    slots: np.ndarray
    linear: bool
    H_rect: np.ndarray | None
    opts: SolverOptions
    seed: int


def _trial_block(ctx: _TrialContext, start: int, stop: int):
    n = ctx.net.n_bus
    size = int(ctx.slots.max()) + 1
    x0 = PolarState.flat(n, ctx.net.slack, ctx.net.buses[ctx.net.slack].ref_v_ang)
    err_v = np.full((stop - start, n), np.nan)
    err_a = np.full((stop - start, n), np.nan)
    ok = np.zeros(stop - start, dtype=bool)
    slack = ctx.net.slack
    for row, t in enumerate(range(start, stop)):
        w = standard_normals([ctx.seed, t], size)[ctx.slots]
        z = ctx.exact + ctx.sigma_noise * w
        try:
            if ctx.linear:
                res = linear_solve(ctx.net, ctx.H_rect, z, ctx.sigma_weight)
            else:
                res = gauss_newton(ctx.model, z, ctx.sigma_weight, x0, ctx.opts, pin_slack=True)
        except (UnobservableError, np.linalg.LinAlgError):
            continue
        if not res.converged:
            continue
        va = res.state.v_ang
        if ctx.linear:
            # report angles against the slack reference, as the polar cases do
            va = va - va[slack] + ctx.x_true.v_ang[slack]
        err_v[row] = res.state.v_mag - ctx.x_true.v_mag
        err_a[row] = va - ctx.x_true.v_ang
        ok[row] = True
    return err_v, err_a, ok


def _blocks(trials: int, jobs: int) -> list[tuple[int, int]]:
    jobs = max(1, min(jobs, trials))
    edges = np.linspace(0, trials, jobs + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_case(
    net: Network,
    x_true: PolarState,
    spec: CaseSpec,
    noise: NoiseSpec = DEFAULT_NOISE,
    opts: SolverOptions | None = None,
    jobs: int = 1,
    case_number: int = 0,
) -> CaseReport:
    """Run ``spec.trials`` noisy estimations and summarise the error spread.

    Trial ``t`` draws its noise from ``(spec.seed, t)``, so the report does
    not depend on how trials are split across ``jobs`` worker processes.
    """
    opts = opts or SolverOptions()
    model = MeasurementModel.build(net, spec.plan.kinds)
    kinds = spec.plan.kinds
    ctx = _TrialContext(
        net=net,
        x_true=x_true,
        model=model,
        exact=model.evaluate(x_true),
        sigma_noise=np.array([noise.sigma_for(k) for k in kinds]),
        sigma_weight=np.array([noise.weight_sigma_for(k) for k in kinds]),
        slots=np.array([noise_slot(net, k) for k in kinds]),
        linear=spec.linear,
        H_rect=model.rectangular_jacobian() if spec.linear else None,
        opts=opts,
        seed=spec.seed,
    )
    blocks = _blocks(spec.trials, jobs)
    if len(blocks) == 1:
        parts = [_trial_block(ctx, *blocks[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(pool.map(_trial_block, [ctx] * len(blocks), *zip(*blocks)))
    err_v = np.concatenate([p[0] for p in parts])
    err_a = np.concatenate([p[1] for p in parts])
    ok = np.concatenate([p[2] for p in parts])
    failed = int((~ok).sum())
    if failed > MAX_FAILURE_RATE * spec.trials:
        raise CaseAborted(spec.label, failed, spec.trials)
    if ok.sum() >= 2:
        sd_v = err_v[ok].std(axis=0, ddof=1)
        sd_a = err_a[ok].std(axis=0, ddof=1)
    else:
        sd_v = np.zeros(net.n_bus)
        sd_a = np.zeros(net.n_bus)
    return CaseReport(
        case=case_number,
        label=spec.label,
        pmu_count=len(spec.pmu_buses),
        avg_sd_vmag=float(sd_v.mean()),
        avg_sd_vang=float(sd_a.mean()),
        failed_trials=failed,
        trials=spec.trials,
        sd_vmag=sd_v,
        sd_vang=sd_a,
    )


def _pct(value: float, base: float) -> float:
    if base == 0.0:
        return 100.0 if value == 0.0 else math.inf
    return 100.0 * value / base


def run_suite(
    net: Network,
    x_true: PolarState,
    trials: int = 1000,
    seed: int = 0,
    noise: NoiseSpec = DEFAULT_NOISE,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    opts: SolverOptions | None = None,
    jobs: int = 1,
    only_pmus: str = "all",
    on_report: Callable[[CaseReport], None] | None = None,
) -> list[CaseReport]:
    """All cases in order, percentages relative to the no-PMU case.

    ``on_report`` is called with each normalised report as soon as its case
    finishes.
    """
    out: list[CaseReport] = []
    base = None
    for k, spec in enumerate(build_cases(net, trials, seed, fractions, only_pmus)):
        rep = run_case(net, x_true, spec, noise, opts, jobs, case_number=k + 1)
        if base is None:
            base = rep
        rep = CaseReport(
            case=rep.case,
            label=rep.label,
            pmu_count=rep.pmu_count,
            avg_sd_vmag=rep.avg_sd_vmag,
            avg_sd_vang=rep.avg_sd_vang,
            pct_vmag=100.0 if k == 0 else _pct(rep.avg_sd_vmag, base.avg_sd_vmag),
            pct_vang=100.0 if k == 0 else _pct(rep.avg_sd_vang, base.avg_sd_vang),
            failed_trials=rep.failed_trials,
            trials=rep.trials,
            sd_vmag=rep.sd_vmag,
            sd_vang=rep.sd_vang,
        )
        out.append(rep)
        if on_report is not None:
            on_report(rep)
    return out


SUITE_COLUMNS = ("case", "label", "pmu_count", "avg_sd_vmag", "pct_vmag", "avg_sd_vang", "pct_vang", "failed_trials")


def write_suite_report(reports: Sequence[CaseReport], path: str | Path) -> None:
    """Table of average error standard deviations; angle columns are in radians."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUITE_COLUMNS)
        for r in reports:
            w.writerow(
                [r.case, r.label, r.pmu_count, f"{r.avg_sd_vmag:.10e}", f"{r.pct_vmag:.2f}",
                 f"{r.avg_sd_vang:.10e}", f"{r.pct_vang:.2f}", r.failed_trials]
            )


def write_per_bus_sd(reports: Sequence[CaseReport], net: Network, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "bus", "sd_vmag", "sd_vang_rad"])
        for r in reports:
            for k, bus in enumerate(net.buses):
                w.writerow([r.case, bus.id, f"{r.sd_vmag[k]:.10e}", f"{r.sd_vang[k]:.10e}"])


def format_table(reports: Sequence[CaseReport]) -> str:
    lines = [f"{'case':<10} {'PMUs':>4}  {'avg S.D. |V| (pu)':>18} {'%':>8}  {'avg S.D. angle (rad)':>20} {'%':>8}"]
    for r in reports:
        lines.append(
            f"{r.label:<10} {r.pmu_count:>4}  {r.avg_sd_vmag:>18.7f} {r.pct_vmag:>7.2f}%  "
            f"{r.avg_sd_vang:>20.7f} {r.pct_vang:>7.2f}%"
        )
    return "\n".join(lines)
