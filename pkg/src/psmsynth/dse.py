"""Timing-constrained design-space exploration.

Given per-computation (MCC) hardware alternatives and each state machine's
period, derive the minimum frequency at which every computation still meets
its deadline, scale all alternatives to the common frequency, evaluate area
and energy for every combination, and extract the non-dominated (area,
energy) front.  Reports are written with fixed decimal formatting so repeated
runs are byte-identical.
"""

from __future__ import annotations

import io
import itertools
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import kernels
from .cost import MHZ, CostTable, MccAlternative


class DseError(Exception):
    pass


class InfeasibleConfigError(DseError):
    pass


@dataclass(frozen=True)
class EnvelopeEntry:
    period: Fraction  # seconds
    invocations: int = 1
    reserved_cycles: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise DseError(f"period must be positive, got {self.period}")
        if self.invocations < 1:
            raise DseError(f"invocations must be >= 1, got {self.invocations}")
        if self.reserved_cycles < 0:
            raise DseError("reserved cycles must be >= 0")


@dataclass(frozen=True)
class TimingEnvelope:
    entries: Mapping[str, EnvelopeEntry]

    def entry(self, mcc: str) -> EnvelopeEntry:
        try:
            return self.entries[mcc]
        except KeyError:
            raise DseError(f"no timing envelope entry for computation '{mcc}'") from None


def required_frequency(alt: MccAlternative, entry: EnvelopeEntry) -> float:
    """Minimum clock frequency (Hz) at which the alternative finishes all its
    invocations within the period.  May exceed f_max — that marks the
    alternative infeasible, it is never silently excluded."""
    cycles = entry.invocations * (alt.exec_cycles + entry.reserved_cycles)
    return float(cycles / entry.period)


def common_frequency(choices: Sequence[MccAlternative], env: TimingEnvelope) -> float:
    """Single scaled frequency meeting every chosen alternative's deadline."""
    if not choices:
        raise DseError("empty configuration")
    f_common = max(required_frequency(alt, env.entry(alt.mcc)) for alt in choices)
    limit = min(alt.f_max for alt in choices)
    if f_common > limit:
        raise InfeasibleConfigError(
            f"required frequency {f_common / MHZ:.6f} MHz exceeds the slowest "
            f"alternative's maximum {limit / MHZ:.6f} MHz"
        )
    return f_common


def config_area(choices: Sequence[MccAlternative]) -> float:
    return sum(alt.area for alt in choices)


def _scale(ratio: float, table: CostTable) -> float:
    d = table.static_fraction
    return d + (1.0 - d) * ratio


def config_energy(
    choices: Sequence[MccAlternative],
    env: TimingEnvelope,
    window: Fraction,
    table: CostTable | None = None,
    f_common: float | None = None,
) -> float:
    """Energy (mJ) over the accounting window with every alternative scaled
    from its rated frequency down to the common frequency."""
    table = table or CostTable()
    if f_common is None:
        f_common = common_frequency(choices, env)
    return sum(
        alt.power * _scale(f_common / alt.f_max, table) for alt in choices
    ) * float(window)


@dataclass(frozen=True)
class SystemConfig:
    config_id: int
    choices: tuple[MccAlternative, ...]
    indices: tuple[int, ...]  # row index of each choice within its group
    f_common: float  # Hz (the max requirement, even when infeasible)
    area: float
    energy: float  # mJ over the window; meaningless when infeasible
    feasible: bool


@dataclass(frozen=True)
class ParetoPoint:
    config: SystemConfig

    @property
    def area(self) -> float:
        return self.config.area

    @property
    def energy(self) -> float:
        return self.config.energy


def enumerate_configs(
    groups: Mapping[str, Sequence[MccAlternative]],
    env: TimingEnvelope,
    window: Fraction,
    table: CostTable | None = None,
    independent: bool = False,
) -> Iterator[SystemConfig]:
    """Plain cartesian product over the per-computation groups, in group and
    row order as given; infeasible combinations are emitted with the feasible
    flag down, never silently dropped.

    With `independent=True` each computation runs at its own required
    frequency (per-instance clock generics) instead of one shared clock.
    """
    table = table or CostTable()
    names = list(groups)
    if not names:
        raise DseError("no computation groups to explore")
    for name in names:
        if not groups[name]:
            raise DseError(f"computation '{name}' has no alternatives")
        for alt in groups[name]:
            if alt.mcc != name:
                raise DseError(f"group '{name}' contains a row for '{alt.mcc}'")
    config_id = 0
    for combo in itertools.product(*(range(len(groups[n])) for n in names)):
        choices = tuple(groups[n][i] for n, i in zip(names, combo))
        f_reqs = [required_frequency(alt, env.entry(alt.mcc)) for alt in choices]
        f_common = max(f_reqs)
        if independent:
            feasible = all(fr <= alt.f_max for fr, alt in zip(f_reqs, choices))
            energy = sum(
                alt.power * _scale(fr / alt.f_max, table)
                for fr, alt in zip(f_reqs, choices)
            ) * float(window)
        else:
            feasible = f_common <= min(alt.f_max for alt in choices)
            energy = config_energy(choices, env, window, table, f_common=f_common)
        yield SystemConfig(
            config_id=config_id,
            choices=choices,
            indices=combo,
            f_common=f_common,
            area=config_area(choices),
            energy=energy,
            feasible=feasible,
        )
        config_id += 1


class StreamingFront:
    """Incremental non-dominated set on (area, energy), both minimized.
    Strict dominance removes a point; exact coordinate ties are kept."""

    def __init__(self):
        self._points: list[ParetoPoint] = []

    def offer(self, point: ParetoPoint) -> bool:
        a, e = point.area, point.energy
        for p in self._points:
            if p.area <= a and p.energy <= e and (p.area < a or p.energy < e):
                return False
        self._points = [
            p
            for p in self._points
            if not (a <= p.area and e <= p.energy and (a < p.area or e < p.energy))
        ]
        self._points.append(point)
        return True

    def result(self) -> list[ParetoPoint]:
        return sorted(
            self._points, key=lambda p: (p.area, p.energy, p.config.config_id)
        )


def pareto(configs: Iterable[SystemConfig]) -> list[ParetoPoint]:
    """Streaming non-dominated filter over feasible configurations, sorted by
    area ascending."""
    front = StreamingFront()
    for cfg in configs:
        if cfg.feasible:
            front.offer(ParetoPoint(cfg))
    return front.result()


# --- Reports ------------------------------------------------------------------

def _fmt(x: float, places: int = 6) -> str:
    return f"{x:.{places}f}"


def _fmt_area(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else _fmt(x)


@dataclass
class Report:
    configs: list[SystemConfig]
    front: list[ParetoPoint]
    min_area: SystemConfig
    min_energy: SystemConfig
    energy_reduction_vs_unscaled: float  # of the min-energy config
    files: dict[str, str] = field(default_factory=dict)  # logical name -> path


def explore(
    groups: Mapping[str, Sequence[MccAlternative]],
    env: TimingEnvelope,
    window: Fraction,
    out_dir: str | os.PathLike,
    table: CostTable | None = None,
    independent: bool = False,
) -> Report:
    """Enumerate, extract the front, and write the report files
    (configs.csv, pareto.csv, pareto.json, scatter.svg, summary.txt)."""
    table = table or CostTable()
    configs = list(enumerate_configs(groups, env, window, table, independent))
    front = pareto(configs)
    feasible = [c for c in configs if c.feasible]
    if not feasible:
        raise InfeasibleConfigError("no feasible configuration in the design space")
    min_area = min(feasible, key=lambda c: (c.area, c.energy, c.config_id))
    min_energy = min(feasible, key=lambda c: (c.energy, c.area, c.config_id))
    unscaled = sum(alt.power for alt in min_energy.choices) * float(window)
    reduction = 1.0 - min_energy.energy / unscaled if unscaled > 0 else 0.0

    names = list(groups)
    os.makedirs(out_dir, exist_ok=True)
    files: dict[str, str] = {}

    def write(name: str, content: str) -> None:
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(content)
        files[name] = path

    header = ["config_id"] + [f"{n}" for n in names] + [
        "f_common_mhz", "area", "energy_mj", "feasible",
    ]
    lines = [",".join(header)]
    for c in configs:
        lines.append(
            ",".join(
                [str(c.config_id)]
                + [f"{n}={i}" for n, i in zip(names, c.indices)]
                + [
                    _fmt(c.f_common / MHZ),
                    _fmt_area(c.area),
                    _fmt(c.energy),
                    "yes" if c.feasible else "no",
                ]
            )
        )
    write("configs.csv", "\n".join(lines) + "\n")

    lines = [",".join(header)]
    for p in front:
        c = p.config
        lines.append(
            ",".join(
                [str(c.config_id)]
                + [f"{n}={i}" for n, i in zip(names, c.indices)]
                + [_fmt(c.f_common / MHZ), _fmt_area(c.area), _fmt(c.energy), "yes"]
            )
        )
    write("pareto.csv", "\n".join(lines) + "\n")

    payload = [
        {
            "config_id": p.config.config_id,
            "area": p.config.area,
            "energy_mj": round(p.config.energy, 9),
            "choices": {n: i for n, i in zip(names, p.config.indices)},
        }
        for p in front
    ]
    write("pareto.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")

    write("scatter.svg", render_scatter(configs, front))

    summary = io.StringIO()
    summary.write(f"configurations: {len(configs)}\n")
    summary.write(f"feasible: {len(feasible)}\n")
    summary.write(f"pareto points: {len(front)}\n")
    summary.write(
        f"min-area config: id={min_area.config_id} area={_fmt_area(min_area.area)} "
        f"energy_mj={_fmt(min_area.energy)} f_common_mhz={_fmt(min_area.f_common / MHZ)}\n"
    )
    summary.write(
        f"min-energy config: id={min_energy.config_id} area={_fmt_area(min_energy.area)} "
        f"energy_mj={_fmt(min_energy.energy)} f_common_mhz={_fmt(min_energy.f_common / MHZ)}\n"
    )
    summary.write(
        f"energy reduction vs unscaled (min-energy config): {_fmt(100.0 * reduction, 2)}%\n"
    )
    write("summary.txt", summary.getvalue())

    return Report(configs, front, min_area, min_energy, reduction, files)


def render_scatter(configs: Sequence[SystemConfig], front: Sequence[ParetoPoint]) -> str:
    """Hand-written SVG scatter of area vs energy with the front as a
    polyline; byte-deterministic."""
    width, height = 640, 480
    ml, mr, mt, mb = 70, 20, 20, 50
    feasible = [c for c in configs if c.feasible]
    xs = [c.area for c in feasible] or [0.0, 1.0]
    ys = [c.energy for c in feasible] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x: float) -> str:
        return _fmt(ml + (x - x0) / (x1 - x0) * (width - ml - mr), 2)

    def sy(y: float) -> str:
        return _fmt(height - mb - (y - y0) / (y1 - y0) * (height - mt - mb), 2)

    out = io.StringIO()
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
    )
    out.write(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n')
    out.write(
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>\n'
    )
    out.write(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>\n')
    out.write(
        f'<text x="{(ml + width - mr) // 2}" y="{height - 12}" text-anchor="middle" '
        f'font-size="14">Area (LUT+FF)</text>\n'
    )
    out.write(
        f'<text x="16" y="{(mt + height - mb) // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 16 {(mt + height - mb) // 2})">Energy (mJ)</text>\n'
    )
    out.write(
        f'<text x="{ml}" y="{height - mb + 18}" text-anchor="middle" font-size="11">'
        f"{_fmt_area(x0)}</text>\n"
    )
    out.write(
        f'<text x="{width - mr}" y="{height - mb + 18}" text-anchor="middle" font-size="11">'
        f"{_fmt_area(x1)}</text>\n"
    )
    out.write(
        f'<text x="{ml - 6}" y="{height - mb}" text-anchor="end" font-size="11">'
        f"{_fmt(y0, 3)}</text>\n"
    )
    out.write(
        f'<text x="{ml - 6}" y="{mt + 10}" text-anchor="end" font-size="11">'
        f"{_fmt(y1, 3)}</text>\n"
    )
    for c in feasible:
        out.write(
            f'<circle cx="{sx(c.area)}" cy="{sy(c.energy)}" r="3" fill="steelblue" '
            f'fill-opacity="0.6"/>\n'
        )
    if front:
        pts = " ".join(f"{sx(p.area)},{sy(p.energy)}" for p in front)
        out.write(
            f'<polyline points="{pts}" fill="none" stroke="crimson" stroke-width="1.5"/>\n'
        )
        for p in front:
            out.write(
                f'<circle cx="{sx(p.area)}" cy="{sy(p.energy)}" r="4" fill="crimson"/>\n'
            )
    out.write("</svg>\n")
    return out.getvalue()


# --- Synthetic-scale streaming path ------------------------------------------

@dataclass(frozen=True)
class FlatSpace:
    """Per-group alternative attributes packed into flat arrays for the
    chunked kernels; `offsets[g]:offsets[g]+sizes[g]` is group g."""

    offsets: np.ndarray
    sizes: np.ndarray
    f_req: np.ndarray  # Hz
    f_max: np.ndarray  # Hz
    power: np.ndarray  # mW
    area: np.ndarray

    @property
    def total(self) -> int:
        return int(np.prod(self.sizes.astype(np.float64)))


def flatten_groups(
    groups: Mapping[str, Sequence[MccAlternative]], env: TimingEnvelope
) -> FlatSpace:
    sizes = np.array([len(groups[n]) for n in groups], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    rows = [alt for n in groups for alt in groups[n]]
    f_req = np.array(
        [required_frequency(alt, env.entry(alt.mcc)) for alt in rows], dtype=np.float64
    )
    return FlatSpace(
        offsets=offsets,
        sizes=sizes,
        f_req=f_req,
        f_max=np.array([alt.f_max for alt in rows], dtype=np.float64),
        power=np.array([alt.power for alt in rows], dtype=np.float64),
        area=np.array([alt.area for alt in rows], dtype=np.float64),
    )


def synthetic_space(
    n_groups: int = 4,
    group_size: int = 32,
    seed: int = 0,
    period: float = 0.1,
) -> FlatSpace:
    """Randomly generated but reproducible exploration space for scale tests;
    shaped like the real tables (cycles/f_max/area/power correlated)."""
    rng = np.random.default_rng(seed)
    n = n_groups * group_size
    cycles = rng.integers(1_000, 2_000_000, size=n).astype(np.float64)
    f_max = rng.uniform(80e6, 200e6, size=n)
    area = rng.uniform(500.0, 30_000.0, size=n)
    power = area * 0.03 * rng.uniform(0.8, 1.2, size=n)
    sizes = np.full(n_groups, group_size, dtype=np.int64)
    offsets = np.arange(n_groups, dtype=np.int64) * group_size
    return FlatSpace(
        offsets=offsets,
        sizes=sizes,
        f_req=cycles / period,
        f_max=f_max,
        power=power,
        area=area,
    )


def explore_streaming(
    space: FlatSpace,
    window: float = 0.1,
    chunk: int = 1 << 16,
    order: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Chunked enumeration with an incremental front merge.

    Returns (front areas, front energies in mJ, front config indices, number
    of feasible configs).  `order` optionally permutes the enumeration for
    order-invariance checks.
    """
    total = space.total
    front_a = np.empty(0)
    front_e = np.empty(0)
    front_i = np.empty(0, dtype=np.int64)
    feasible_count = 0
    for start in range(0, total, chunk):
        count = min(chunk, total - start)
        if order is None:
            areas, energies, ok = kernels.evaluate_combos(
                start, count, space.offsets, space.sizes,
                space.f_req, space.f_max, space.power, space.area,
            )
            ids = np.arange(start, start + count, dtype=np.int64)
        else:
            ids = order[start:start + count]
            areas = np.empty(count)
            energies = np.empty(count)
            ok = np.empty(count, dtype=np.bool_)
            # Permuted enumeration evaluates ids one contiguous run at a time.
            for j, cid in enumerate(ids):
                a, e, f = kernels.evaluate_combos(
                    int(cid), 1, space.offsets, space.sizes,
                    space.f_req, space.f_max, space.power, space.area,
                )
                areas[j], energies[j], ok[j] = a[0], e[0], f[0]
        feasible_count += int(ok.sum())
        areas, energies, ids = areas[ok], energies[ok] * window, ids[ok]
        if areas.size == 0:
            continue
        keep = kernels.pareto_mask(areas, energies)
        cand_a = np.concatenate([front_a, areas[keep]])
        cand_e = np.concatenate([front_e, energies[keep]])
        cand_i = np.concatenate([front_i, ids[keep]])
        keep = kernels.pareto_mask(cand_a, cand_e)
        front_a, front_e, front_i = cand_a[keep], cand_e[keep], cand_i[keep]
    order_idx = np.lexsort((front_i, front_e, front_a))
    return front_a[order_idx], front_e[order_idx], front_i[order_idx], feasible_count
