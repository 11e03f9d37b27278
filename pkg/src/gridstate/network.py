"""Network data model and IEEE Common Data Format reader.

Bus voltages stored in a solved CDF file are used as the reference (true)
operating point; no power flow is solved here.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class NetworkFormatError(ValueError):
    """Malformed case file (missing sections or terminators)."""


class NetworkDataError(ValueError):
    """Case file parsed but the data is inconsistent."""


class BusKind(Enum):
    PQ = 0
    PV = 2
    SLACK = 3

    @classmethod
    def from_cdf(cls, code: int) -> "BusKind":
        # CDF types: 0/1 load, 2 generator, 3 swing
        if code == 3:
            return cls.SLACK
        if code == 2:
            return cls.PV
        return cls.PQ


@dataclass(frozen=True)
class Bus:
    id: int
    base_kv: float
    bus_kind: BusKind
    ref_v_mag: float
    ref_v_ang: float
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class Branch:
    """A pi-model branch between two buses, all values in per unit.

    ``shunt_*_from`` and ``shunt_*_to`` are the effective shunt admittances at
    each end, with any off-nominal tap already folded in.
    """

    from_bus: int
    to_bus: int
    series_g: float
    series_b: float
    shunt_g_from: float
    shunt_b_from: float
    shunt_g_to: float
    shunt_b_to: float
    tap_ratio: float = 1.0
    r: float = 0.0
    x: float = 0.0
    charging_b: float = 0.0

    @classmethod
    def from_impedance(
        cls, from_bus: int, to_bus: int, r: float, x: float, charging_b: float = 0.0, tap_ratio: float = 1.0
    ) -> "Branch":
        if from_bus == to_bus:
            raise NetworkDataError(f"branch {from_bus}-{to_bus} connects a bus to itself")
        if r == 0.0 and x == 0.0:
            raise NetworkDataError(f"branch {from_bus}-{to_bus} has zero series impedance")
        if tap_ratio <= 0.0:
            raise NetworkDataError(f"branch {from_bus}-{to_bus} has non-positive tap ratio {tap_ratio}")
        y = 1.0 / complex(r, x)
        a = tap_ratio
        # off-nominal tap on the from side: Yff = (y + jb/2)/a^2, Yft = -y/a, Ytt = y + jb/2
        y_series = y / a
        y_from = (y + 0.5j * charging_b) / (a * a) - y_series
        y_to = y + 0.5j * charging_b - y_series
        return cls(
            from_bus=from_bus,
            to_bus=to_bus,
            series_g=y_series.real,
            series_b=y_series.imag,
            shunt_g_from=y_from.real,
            shunt_b_from=y_from.imag,
            shunt_g_to=y_to.real,
            shunt_b_to=y_to.imag,
            tap_ratio=tap_ratio,
            r=r,
            x=x,
            charging_b=charging_b,
        )

    @property
    def series_admittance(self) -> complex:
        return complex(self.series_g, self.series_b)


@dataclass(frozen=True)
class PolarState:
    """Bus voltages in polar form. Angles are radians."""

    v_mag: np.ndarray
    v_ang: np.ndarray
    slack: int = 0

    def __post_init__(self):
        vm = np.array(self.v_mag, dtype=float)
        va = np.array(self.v_ang, dtype=float)
        if vm.shape != va.shape or vm.ndim != 1:
            raise ValueError("v_mag and v_ang must be 1-D arrays of equal length")
        if np.any(vm <= 0.0):
            raise ValueError("voltage magnitudes must be positive")
        if not 0 <= self.slack < vm.size:
            raise ValueError(f"slack index {self.slack} out of range")
        vm.flags.writeable = False
        va.flags.writeable = False
        object.__setattr__(self, "v_mag", vm)
        object.__setattr__(self, "v_ang", va)

    @property
    def n_bus(self) -> int:
        return self.v_mag.size

    @classmethod
    def flat(cls, n_bus: int, slack: int = 0, slack_angle: float = 0.0) -> "PolarState":
        va = np.zeros(n_bus)
        va[slack] = slack_angle
        return cls(np.ones(n_bus), va, slack)

    def to_vector(self) -> np.ndarray:
        """The 2N-1 free coordinates: non-slack angles followed by all magnitudes."""
        return np.concatenate([np.delete(self.v_ang, self.slack), self.v_mag])

    def with_vector(self, x: np.ndarray) -> "PolarState":
        n = self.n_bus
        va = np.insert(np.asarray(x[: n - 1], dtype=float), self.slack, self.v_ang[self.slack])
        return PolarState(np.asarray(x[n - 1 :], dtype=float), va, self.slack)

    def complex_voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)

    def to_rectangular(self) -> "RectangularState":
        return RectangularState(self.v_mag * np.cos(self.v_ang), self.v_mag * np.sin(self.v_ang))


@dataclass(frozen=True)
class RectangularState:
    """Bus voltages as V = E + jF."""

    e: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        e = np.array(self.e, dtype=float)
        f = np.array(self.f, dtype=float)
        if e.shape != f.shape or e.ndim != 1:
            raise ValueError("e and f must be 1-D arrays of equal length")
        e.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "f", f)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.e, self.f])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "RectangularState":
        n = x.size // 2
        return cls(x[:n], x[n:])

    def to_polar(self, slack: int = 0) -> PolarState:
        return PolarState(np.hypot(self.e, self.f), np.arctan2(self.f, self.e), slack)


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    mva_base: float = 100.0
    name: str = ""
    index: dict[int, int] = field(default=None, compare=False, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        index: dict[int, int] = {}
        for k, bus in enumerate(self.buses):
            if bus.id in index:
                raise NetworkDataError(f"duplicate bus id {bus.id}")
            index[bus.id] = k
        object.__setattr__(self, "index", index)
        slacks = [k for k, b in enumerate(self.buses) if b.bus_kind is BusKind.SLACK]
        if len(slacks) != 1:
            raise NetworkDataError(f"expected exactly one slack bus, found {len(slacks)}")
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in index:
                    raise NetworkDataError(f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}")
            if br.from_bus == br.to_bus:
                raise NetworkDataError(f"branch {br.from_bus}-{br.to_bus} connects a bus to itself")
            if br.series_g == 0.0 and br.series_b == 0.0:
                raise NetworkDataError(f"branch {br.from_bus}-{br.to_bus} has zero series admittance")

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def slack(self) -> int:
        for k, b in enumerate(self.buses):
            if b.bus_kind is BusKind.SLACK:
                return k
        raise AssertionError("unreachable")

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_index(self, bus_id: int) -> int:
        try:
            return self.index[bus_id]
        except KeyError:
            raise KeyError(f"unknown bus {bus_id}") from None

    def branch_ends(self) -> tuple[np.ndarray, np.ndarray]:
        f = np.array([self.index[b.from_bus] for b in self.branches], dtype=np.intp)
        t = np.array([self.index[b.to_bus] for b in self.branches], dtype=np.intp)
        return f, t

    def neighbors(self) -> list[set[int]]:
        """Adjacency by internal index."""
        adj: list[set[int]] = [set() for _ in self.buses]
        for i, j in zip(*self.branch_ends()):
            adj[i].add(int(j))
            adj[j].add(int(i))
        return adj

    def incident_branches(self, bus: int) -> list[tuple[int, str]]:
        """(branch index, side) pairs for branches touching internal bus ``bus``."""
        f, t = self.branch_ends()
        out = []
        for k in range(self.n_branch):
            if f[k] == bus:
                out.append((k, "from"))
            elif t[k] == bus:
                out.append((k, "to"))
        return out

    def ybus(self) -> np.ndarray:
        """Dense bus admittance matrix including bus shunts."""
        n = self.n_bus
        y = np.zeros((n, n), dtype=complex)
        for br, i, j in zip(self.branches, *self.branch_ends()):
            ys = br.series_admittance
            y[i, i] += ys + complex(br.shunt_g_from, br.shunt_b_from)
            y[j, j] += ys + complex(br.shunt_g_to, br.shunt_b_to)
            y[i, j] -= ys
            y[j, i] -= ys
        for k, bus in enumerate(self.buses):
            y[k, k] += complex(bus.shunt_g, bus.shunt_b)
        return y

    def is_connected(self) -> bool:
        adj = self.neighbors()
        seen = {0}
        stack = [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n_bus

    def reference_state(self) -> PolarState:
        return PolarState(
            np.array([b.ref_v_mag for b in self.buses]),
            np.array([b.ref_v_ang for b in self.buses]),
            self.slack,
        )


def branch_admittances(net: Network, branch: Branch) -> tuple[float, float, float, float, float, float]:
    """Return ``(g_ij, b_ij, g_si, b_si, g_sj, b_sj)`` for a branch of ``net``."""
    if branch not in net.branches:
        raise KeyError(f"branch {branch.from_bus}-{branch.to_bus} is not part of this network")
    return (
        branch.series_g,
        branch.series_b,
        branch.shunt_g_from,
        branch.shunt_b_from,
        branch.shunt_g_to,
        branch.shunt_b_to,
    )


# --- IEEE Common Data Format -------------------------------------------------

# 1-based inclusive column ranges
_BUS_COLS = {
    "id": (1, 4),
    "type": (25, 26),
    "vm": (28, 33),
    "va": (34, 40),
    "base_kv": (77, 83),
    "gs": (107, 114),
    "bs": (115, 122),
}
_BRANCH_COLS = {
    "from": (1, 4),
    "to": (6, 9),
    "r": (20, 29),
    "x": (30, 40),
    "b": (41, 50),
    "ratio": (77, 82),
    "angle": (84, 90),
}


def _col(line: str, span: tuple[int, int]) -> str:
    return line[span[0] - 1 : span[1]].strip()


def _parse_bus_fixed(line: str) -> dict:
    raw = {k: _col(line, span) for k, span in _BUS_COLS.items()}
    return {
        "id": int(raw["id"]),
        "type": int(raw["type"]),
        "vm": float(raw["vm"]),
        "va": float(raw["va"]),
        "base_kv": float(raw["base_kv"] or 0.0),
        "gs": float(raw["gs"] or 0.0),
        "bs": float(raw["bs"] or 0.0),
    }


def _parse_bus_tokens(line: str) -> dict:
    # name may contain spaces: numeric fields are counted from the end
    tok = line.split()
    tail = tok[-17:] if len(tok) >= 19 else tok[-16:]
    if len(tail) < 16:
        raise NetworkFormatError(f"cannot parse bus record: {line!r}")
    # area, zone, type, vm, va, pd, qd, pg, qg, base_kv, vdes, vmax, vmin, gs, bs[, remote]
    return {
        "id": int(tok[0]),
        "type": int(tail[2]),
        "vm": float(tail[3]),
        "va": float(tail[4]),
        "base_kv": float(tail[9]),
        "gs": float(tail[13]),
        "bs": float(tail[14]),
    }


def _parse_branch_fixed(line: str) -> dict:
    raw = {k: _col(line, span) for k, span in _BRANCH_COLS.items()}
    return {
        "from": int(raw["from"]),
        "to": int(raw["to"]),
        "r": float(raw["r"]),
        "x": float(raw["x"]),
        "b": float(raw["b"] or 0.0),
        "ratio": float(raw["ratio"] or 0.0),
        "angle": float(raw["angle"] or 0.0),
    }


def _parse_branch_tokens(line: str) -> dict:
    # from, to, area, zone, circuit, type, r, x, b, rate1..3, ctrl, side, ratio, angle, ...
    tok = line.split()
    if len(tok) < 9:
        raise NetworkFormatError(f"cannot parse branch record: {line!r}")
    return {
        "from": int(tok[0]),
        "to": int(tok[1]),
        "r": float(tok[6]),
        "x": float(tok[7]),
        "b": float(tok[8]),
        "ratio": float(tok[14]) if len(tok) > 14 else 0.0,
        "angle": float(tok[15]) if len(tok) > 15 else 0.0,
    }


def _parse_record(line: str, fixed, tokens) -> dict:
    try:
        return fixed(line)
    except (ValueError, IndexError):
        try:
            return tokens(line)
        except (ValueError, IndexError) as exc:
            raise NetworkFormatError(f"cannot parse record: {line!r}") from exc


def _section(lines: Sequence[str], header: str, start: int) -> tuple[list[str], int]:
    for k in range(start, len(lines)):
        if lines[k].upper().startswith(header):
            break
    else:
        raise NetworkFormatError(f"missing '{header}' section")
    body = []
    for m in range(k + 1, len(lines)):
        if lines[m].strip().startswith("-999"):
            return body, m + 1
        if lines[m].strip():
            body.append(lines[m])
    raise NetworkFormatError(f"'{header}' section is not terminated by -999")


def parse_ieee_cdf(text: str | Iterable[str], name: str = "") -> tuple[Network, PolarState]:
    """Parse an IEEE Common Data Format case.

    Returns the network and the solved voltage state stored in the bus
    section (angles converted to radians).
    """
    lines = text.splitlines() if isinstance(text, str) else [ln.rstrip("\n") for ln in text]
    if not lines:
        raise NetworkFormatError("empty case file")
    header = lines[0]
    try:
        mva_base = float(header[31:37])
    except (ValueError, IndexError):
        mva_base = 100.0
    if not mva_base > 0:
        mva_base = 100.0

    bus_lines, pos = _section(lines, "BUS DATA FOLLOWS", 1)
    branch_lines, _ = _section(lines, "BRANCH DATA FOLLOWS", pos)

    buses = []
    for ln in bus_lines:
        rec = _parse_record(ln, _parse_bus_fixed, _parse_bus_tokens)
        buses.append(
            Bus(
                id=rec["id"],
                # 0 kV means "not given" in several archived files
                base_kv=rec["base_kv"] if rec["base_kv"] > 0 else 1.0,
                bus_kind=BusKind.from_cdf(rec["type"]),
                ref_v_mag=rec["vm"],
                ref_v_ang=math.radians(rec["va"]),
                shunt_g=rec["gs"],
                shunt_b=rec["bs"],
                name=ln[5:17].strip() if len(ln) > 17 else "",
            )
        )
    ids = [b.id for b in buses]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise NetworkDataError(f"duplicate bus id(s) {dup}")
    known = set(ids)

    branches = []
    for ln in branch_lines:
        rec = _parse_record(ln, _parse_branch_fixed, _parse_branch_tokens)
        for end in (rec["from"], rec["to"]):
            if end not in known:
                raise NetworkDataError(f"branch {rec['from']}-{rec['to']} references unknown bus {end}")
        if rec["angle"] != 0.0:
            raise NetworkDataError(f"branch {rec['from']}-{rec['to']}: phase-shifting transformers are not supported")
        branches.append(
            Branch.from_impedance(
                rec["from"], rec["to"], rec["r"], rec["x"], rec["b"], rec["ratio"] if rec["ratio"] != 0.0 else 1.0
            )
        )

    net = Network(tuple(buses), tuple(branches), mva_base, name)
    return net, net.reference_state()


BUNDLED_CASES = ("ieee14", "ieee30")


def load_case(name: str) -> tuple[Network, PolarState]:
    """Load a bundled case (``"ieee14"``/``"ieee30"``, with or without ``.cdf``) or a CDF file path."""
    stem = Path(name).name.removesuffix(".cdf").lower()
    path = Path(name)
    if path.is_file():
        return parse_ieee_cdf(path.read_text(), name=path.stem)
    if stem in BUNDLED_CASES:
        text = resources.files("gridstate.data").joinpath(f"{stem}.cdf").read_text()
        return parse_ieee_cdf(text, name=stem)
    raise FileNotFoundError(f"case file not found: {name}")


def write_network_csv(net: Network, directory: str | Path) -> tuple[Path, Path]:
    """Dump ``buses.csv`` and ``branches.csv`` for inspection."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bus_path = directory / "buses.csv"
    branch_path = directory / "branches.csv"
    with open(bus_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "bus", "kind", "base_kv", "ref_v_mag", "ref_v_ang_rad", "shunt_g", "shunt_b"])
        for k, b in enumerate(net.buses):
            w.writerow([k, b.id, b.bus_kind.name, b.base_kv, repr(b.ref_v_mag), repr(b.ref_v_ang), b.shunt_g, b.shunt_b])
    with open(branch_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["index", "from_bus", "to_bus", "series_g", "series_b", "shunt_g_from", "shunt_b_from",
             "shunt_g_to", "shunt_b_to", "tap_ratio"]
        )
        for k, br in enumerate(net.branches):
            w.writerow(
                [k, br.from_bus, br.to_bus, repr(br.series_g), repr(br.series_b), repr(br.shunt_g_from),
                 repr(br.shunt_b_from), repr(br.shunt_g_to), repr(br.shunt_b_to), br.tap_ratio]
            )
    return bus_path, branch_path
