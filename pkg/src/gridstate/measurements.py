"""Measurement kinds, measurement functions h(x), Jacobians and noisy sampling."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .network import Network, PolarState


class MeasurementConfigError(ValueError):
    pass


class MeasType(Enum):
    P_INJECTION = "p_inj"
    Q_INJECTION = "q_inj"
    P_FLOW = "p_flow"
    Q_FLOW = "q_flow"
    V_MAGNITUDE = "v_mag"
    V_ANGLE = "v_ang"
    I_REAL = "i_real"
    I_IMAG = "i_imag"
    V_REAL = "v_real"
    V_IMAG = "v_imag"

    @property
    def code(self) -> int:
        return _CODES[self]

    @property
    def on_branch(self) -> bool:
        return self in (MeasType.P_FLOW, MeasType.Q_FLOW, MeasType.I_REAL, MeasType.I_IMAG)

    @property
    def pmu_only(self) -> bool:
        return self in (MeasType.V_ANGLE, MeasType.I_REAL, MeasType.I_IMAG, MeasType.V_REAL, MeasType.V_IMAG)


_CODES = {t: k for k, t in enumerate(MeasType)}
SIDES = ("from", "to")


@dataclass(frozen=True)
class MeasurementKind:
    """What is measured and where.

    ``location`` is the external bus id for bus quantities and the 0-based
    branch position for branch quantities; ``side`` names the metered end.
    """

    type: MeasType
    location: int
    side: str | None = None
    pmu: bool = False

    def __post_init__(self):
        if self.type.on_branch:
            if self.side not in SIDES:
                raise MeasurementConfigError(f"{self.type.value} needs side 'from' or 'to', got {self.side!r}")
        elif self.side is not None:
            raise MeasurementConfigError(f"{self.type.value} is a bus quantity; side must be None")
        if self.type.pmu_only and not self.pmu:
            object.__setattr__(self, "pmu", True)

    def label(self) -> str:
        base = f"{self.type.value}@{self.location}"
        return f"{base}:{self.side}" if self.side else base


@dataclass(frozen=True)
class Measurement:
    kind: MeasurementKind
    value: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise MeasurementConfigError(f"sigma must be positive for {self.kind.label()}, got {self.sigma}")


@dataclass(frozen=True)
class MeasurementSet:
    measurements: tuple[Measurement, ...]
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "measurements", tuple(self.measurements))

    def __len__(self) -> int:
        return len(self.measurements)

    def __iter__(self):
        return iter(self.measurements)

    @property
    def kinds(self) -> tuple[MeasurementKind, ...]:
        return tuple(m.kind for m in self.measurements)

    @property
    def values(self) -> np.ndarray:
        return np.array([m.value for m in self.measurements])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([m.sigma for m in self.measurements])

    def is_pmu_only(self) -> bool:
        return bool(self.measurements) and all(m.kind.pmu for m in self.measurements)

    def is_rectangular_pmu(self) -> bool:
        ok = (MeasType.V_REAL, MeasType.V_IMAG, MeasType.I_REAL, MeasType.I_IMAG)
        return bool(self.measurements) and all(m.kind.type in ok for m in self.measurements)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "location", "side", "value", "sigma", "pmu"])
            for m in self.measurements:
                k = m.kind
                w.writerow([k.type.value, k.location, k.side or "", repr(m.value), repr(m.sigma), int(k.pmu)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "MeasurementSet":
        out = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                kind = MeasurementKind(
                    MeasType(row["kind"]),
                    int(row["location"]),
                    row["side"] or None,
                    bool(int(row.get("pmu") or 0)),
                )
                out.append(Measurement(kind, float(row["value"]), float(row["sigma"])))
        return cls(tuple(out), provenance=f"file:{path}")


# --- plans -------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementPlan:
    """Ordered list of measurement kinds; the order fixes the rows of z, H and R."""

    kinds: tuple[MeasurementKind, ...]
    pmu_buses: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "pmu_buses", tuple(self.pmu_buses))

    def __len__(self) -> int:
        return len(self.kinds)

    def __add__(self, other: "MeasurementPlan") -> "MeasurementPlan":
        return MeasurementPlan(self.kinds + other.kinds, self.pmu_buses + other.pmu_buses)

    @property
    def is_pmu_only(self) -> bool:
        return bool(self.kinds) and all(k.pmu for k in self.kinds)

    @property
    def is_rectangular(self) -> bool:
        ok = (MeasType.V_REAL, MeasType.V_IMAG, MeasType.I_REAL, MeasType.I_IMAG)
        return bool(self.kinds) and all(k.type in ok for k in self.kinds)


def conventional_plan(net: Network) -> MeasurementPlan:
    """P/Q injection at every bus, P/Q flow at both ends of every branch, |V| at every bus."""
    ids = net.bus_ids
    kinds = [MeasurementKind(MeasType.P_INJECTION, i) for i in ids]
    kinds += [MeasurementKind(MeasType.Q_INJECTION, i) for i in ids]
    ends = [(k, side) for k in range(net.n_branch) for side in SIDES]
    kinds += [MeasurementKind(MeasType.P_FLOW, k, side) for k, side in ends]
    kinds += [MeasurementKind(MeasType.Q_FLOW, k, side) for k, side in ends]
    kinds += [MeasurementKind(MeasType.V_MAGNITUDE, i) for i in ids]
    return MeasurementPlan(tuple(kinds))


def _pmu_currents(net: Network, pmu_buses: Sequence[int]) -> list[tuple[int, str]]:
    out = []
    for bus_id in pmu_buses:
        out += net.incident_branches(net.bus_index(bus_id))
    return out


def pmu_plan(net: Network, pmu_buses: Iterable[int], rectangular: bool = False) -> MeasurementPlan:
    """Rows contributed by PMUs at ``pmu_buses`` (external ids).

    Polar rows: |V|, angle, then real and imaginary current parts on every
    incident branch. Rectangular rows (PMU-only linear estimation): E, C, F, D.
    """
    buses = list(dict.fromkeys(pmu_buses))
    for bus_id in buses:
        net.bus_index(bus_id)
    currents = _pmu_currents(net, buses)
    c_rows = [MeasurementKind(MeasType.I_REAL, k, side, True) for k, side in currents]
    d_rows = [MeasurementKind(MeasType.I_IMAG, k, side, True) for k, side in currents]
    if rectangular:
        kinds = [MeasurementKind(MeasType.V_REAL, i, None, True) for i in buses] + c_rows
        kinds += [MeasurementKind(MeasType.V_IMAG, i, None, True) for i in buses] + d_rows
    else:
        kinds = [MeasurementKind(MeasType.V_MAGNITUDE, i, None, True) for i in buses]
        kinds += [MeasurementKind(MeasType.V_ANGLE, i, None, True) for i in buses] + c_rows + d_rows
    return MeasurementPlan(tuple(kinds), tuple(buses))


def hybrid_plan(net: Network, pmu_buses: Iterable[int]) -> MeasurementPlan:
    return conventional_plan(net) + pmu_plan(net, pmu_buses)


# --- noise -------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations per measurement class (per unit, radians for angles).

    A zero sigma means the class is simulated without noise; the default
    sigma of that class is still used as its weight so that R stays
    invertible.
    """

    power: float = 0.03
    vmag: float = 0.012
    pmu: float = 0.0002
    pmu_angle: float = 0.0002

    def __post_init__(self):
        for name in ("power", "vmag", "pmu", "pmu_angle"):
            if getattr(self, name) < 0:
                raise MeasurementConfigError(f"sigma '{name}' must be non-negative")

    def sigma_class(self, kind: MeasurementKind) -> str:
        if kind.type is MeasType.V_ANGLE:
            return "pmu_angle"
        if kind.pmu:
            return "pmu"
        if kind.type is MeasType.V_MAGNITUDE:
            return "vmag"
        return "power"

    def sigma_for(self, kind: MeasurementKind) -> float:
        return getattr(self, self.sigma_class(kind))

    def weight_sigma_for(self, kind: MeasurementKind) -> float:
        s = self.sigma_for(kind)
        return s if s > 0 else getattr(DEFAULT_NOISE, self.sigma_class(kind))

    def scaled(self, factor: float) -> "NoiseSpec":
        return NoiseSpec(self.power * factor, self.vmag * factor, self.pmu * factor, self.pmu_angle * factor)


DEFAULT_NOISE = NoiseSpec()


# --- measurement model -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """A list of measurement kinds compiled into flat arrays for the kernel."""

    net: Network
    kinds: tuple[MeasurementKind, ...]
    code: np.ndarray = field(repr=False)
    kbus: np.ndarray = field(repr=False)
    mbus: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    gs: np.ndarray = field(repr=False)
    bs: np.ndarray = field(repr=False)
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    ydata_g: np.ndarray = field(repr=False)
    ydata_b: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, net: Network, kinds: Iterable[MeasurementKind]) -> "MeasurementModel":
        kinds = tuple(kinds)
        if not kinds:
            raise MeasurementConfigError("empty measurement list")
        nrow = len(kinds)
        code = np.empty(nrow, dtype=np.intc)
        kbus = np.zeros(nrow, dtype=np.intp)
        mbus = np.zeros(nrow, dtype=np.intp)
        g = np.zeros(nrow)
        b = np.zeros(nrow)
        gs = np.zeros(nrow)
        bs = np.zeros(nrow)
        for r, kind in enumerate(kinds):
            code[r] = kind.type.code
            if kind.type.on_branch:
                if not 0 <= kind.location < net.n_branch:
                    raise KeyError(f"unknown branch {kind.location}")
                br = net.branches[kind.location]
                g[r], b[r] = br.series_g, br.series_b
                if kind.side == "from":
                    kbus[r], mbus[r] = net.bus_index(br.from_bus), net.bus_index(br.to_bus)
                    gs[r], bs[r] = br.shunt_g_from, br.shunt_b_from
                else:
                    kbus[r], mbus[r] = net.bus_index(br.to_bus), net.bus_index(br.from_bus)
                    gs[r], bs[r] = br.shunt_g_to, br.shunt_b_to
            else:
                kbus[r] = net.bus_index(kind.location)
        y = net.ybus()
        pattern = (y != 0) | np.eye(net.n_bus, dtype=bool)
        indptr = np.concatenate([[0], np.cumsum(pattern.sum(axis=1))]).astype(np.intp)
        rows, cols = np.nonzero(pattern)
        return cls(
            net, kinds, code, kbus, mbus, g, b, gs, bs, indptr,
            cols.astype(np.intp), np.ascontiguousarray(y.real[rows, cols]), np.ascontiguousarray(y.imag[rows, cols]),
        )

    def __len__(self) -> int:
        return len(self.kinds)

    def _run(self, x: PolarState, want_jac: bool, backend: str | None):
        n = self.net.n_bus
        if x.n_bus != n:
            raise ValueError(f"state has {x.n_bus} buses, network has {n}")
        h = np.empty(len(self.kinds))
        H = np.empty((len(self.kinds), 2 * n)) if want_jac else np.empty((0, 0))
        kernels.polar_model(
            self.code, self.kbus, self.mbus, self.g, self.b, self.gs, self.bs,
            self.indptr, self.indices, self.ydata_g, self.ydata_b,
            np.ascontiguousarray(x.v_mag), np.ascontiguousarray(x.v_ang), h, H, want_jac,
            backend=backend,
        )
        return h, H

    def evaluate(self, x: PolarState, backend: str | None = None) -> np.ndarray:
        return self._run(x, False, backend)[0]

    def evaluate_with_jacobian(
        self, x: PolarState, full: bool = False, backend: str | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """``h(x)`` and ``H(x)``.

        With ``full=False`` the slack-angle column is dropped, leaving the
        2N-1 polar state coordinates; ``full=True`` keeps all 2N columns.
        """
        h, H = self._run(x, True, backend)
        if not full:
            H = np.delete(H, x.slack, axis=1)
        return h, H

    def rectangular_jacobian(self) -> np.ndarray:
        """Constant Jacobian over ``[E_0..E_{N-1}, F_0..F_{N-1}]`` for E, F, C, D rows."""
        n = self.net.n_bus
        H = np.zeros((len(self.kinds), 2 * n))
        for r, kind in enumerate(self.kinds):
            k, m = self.kbus[r], self.mbus[r]
            gg, bb = self.g[r], self.b[r]
            gk, bk = gg + self.gs[r], bb + self.bs[r]
            t = kind.type
            if t is MeasType.V_REAL:
                H[r, k] = 1.0
            elif t is MeasType.V_IMAG:
                H[r, n + k] = 1.0
            elif t is MeasType.I_REAL:
                H[r, k], H[r, m], H[r, n + k], H[r, n + m] = gk, -gg, -bk, bb
            elif t is MeasType.I_IMAG:
                H[r, k], H[r, m], H[r, n + k], H[r, n + m] = bk, -bb, gk, -gg
            else:
                raise MeasurementConfigError(f"{t.value} is not linear in rectangular coordinates")
        return H


def evaluate_h(net: Network, x: PolarState, kind: MeasurementKind) -> float:
    return float(MeasurementModel.build(net, [kind]).evaluate(x)[0])


def jacobian_row(net: Network, x: PolarState, kind: MeasurementKind) -> np.ndarray:
    """Partial derivatives over the 2N-1 polar coordinates (slack angle excluded)."""
    return MeasurementModel.build(net, [kind]).evaluate_with_jacobian(x)[1][0]


# --- simulation --------------------------------------------------------------

def noise_slot(net: Network, kind: MeasurementKind) -> int:
    """Stable index of a meter within the network's universe of possible meters.

    Noise for a meter is the draw at this index, so a given meter receives
    the same error whatever plan it appears in.
    """
    width = net.n_bus + 2 * net.n_branch
    if kind.type.on_branch:
        pos = net.n_bus + 2 * kind.location + SIDES.index(kind.side)
    else:
        pos = net.bus_index(kind.location)
    return (2 * kind.type.code + int(kind.pmu)) * width + pos


def standard_normals(seed: int | Sequence[int], size: int) -> np.ndarray:
    return np.random.default_rng(np.random.SeedSequence(seed)).standard_normal(size)


def simulate_measurements(
    net: Network,
    x_true: PolarState,
    plan: MeasurementPlan,
    noise: NoiseSpec = DEFAULT_NOISE,
    seed: int | Sequence[int] = 0,
    model: MeasurementModel | None = None,
) -> MeasurementSet:
    """Noisy measurements ``h(x_true) + N(0, sigma)`` for every kind in ``plan``."""
    if not len(plan):
        raise MeasurementConfigError("measurement plan is empty")
    if model is None:
        model = MeasurementModel.build(net, plan.kinds)
    exact = model.evaluate(x_true)
    slots = np.array([noise_slot(net, k) for k in plan.kinds])
    w = standard_normals(seed, int(slots.max()) + 1)[slots]
    sig = np.array([noise.sigma_for(k) for k in plan.kinds])
    values = exact + sig * w
    meas = tuple(
        Measurement(k, float(v), noise.weight_sigma_for(k)) for k, v in zip(plan.kinds, values)
    )
    return MeasurementSet(meas, provenance=f"seed:{seed}")
