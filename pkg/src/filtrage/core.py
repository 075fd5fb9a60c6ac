"""Grids, path bundles, jump kernels and characteristic triples.

Everything here is immutable once built: arrays handed to the constructors are
made read-only (views are copied first), so bundles and reports can be shared
freely between threads or cached by the harness.

Conventions used throughout the package:

* A :class:`TimeGrid` with ``steps`` cells has ``steps + 1`` points
  ``t_k = k * dt``.  Pathwise arrays have shape ``(n_paths, steps + 1)``.
* A jump at exact time ``s`` in the cell ``(t_{k-1}, t_k]`` is recorded at
  grid index ``k``; the series value at ``t_k`` already includes it.
* Time integrals use the left endpoint of each cell (predictable evaluation),
  so cumulative arrays start at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy import stats

TRUNCATION_BOUND = 1.0
# Atoms with |mark| below this are treated as "no jump".
ZERO_MARK = 1e-12


class FiltrageError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(FiltrageError, ValueError):
    """Array shapes disagree with the grid or with each other."""


class SimulationError(FiltrageError, RuntimeError):
    """A simulator produced a non-finite state or could not sample."""


class FamilyMismatch(FiltrageError, ValueError):
    """A bundle was handed to a model family that did not produce it."""


def _frozen(a, dtype=float) -> np.ndarray:
    # arrays that own their buffer are frozen in place to avoid doubling memory
    # on large bundles; views and foreign dtypes are copied first
    out = np.asarray(a, dtype=dtype)
    if out is not a or not out.flags.owndata:
        out = np.array(out, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretisation of ``[0, horizon]`` into ``steps`` cells."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def size(self) -> int:
        return self.steps + 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.size) * self.dt

    def index(self, t: float) -> int:
        """Grid index of time ``t``; ``t`` must sit on the grid."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.steps or abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a grid point of {self}")
        return k

    def event_index(self, s) -> np.ndarray:
        """Index ``k`` of the cell ``(t_{k-1}, t_k]`` containing each event time."""
        # events happen at positive times; an exact zero is folded into the first cell
        return np.maximum(np.searchsorted(self.times, np.asarray(s, dtype=float), side="left"), 1)


def truncate(x):
    """Standard truncation ``x * 1{|x| <= 1}``; works on scalars and arrays."""
    arr = np.asarray(x, dtype=float)
    out = np.where(np.abs(arr) <= TRUNCATION_BOUND, arr, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class TruncationPolicy:
    """The fixed truncation function; kept as a type so call sites can name it."""

    bound: float = TRUNCATION_BOUND

    def __post_init__(self):
        if self.bound != TRUNCATION_BOUND:
            raise ValueError("only the standard truncation (bound 1) is supported")

    def __call__(self, x):
        return truncate(x)


STANDARD_TRUNCATION = TruncationPolicy()


# ---------------------------------------------------------------------------
# mark distributions and kernels


@dataclass(frozen=True)
class PointMass:
    x: float

    @property
    def mean(self) -> float:
        return self.x

    @property
    def variance(self) -> float:
        return 0.0

    def truncated_mean(self) -> float:
        """``E[chi(x)]``."""
        return truncate(self.x)

    def big_jump_mean(self) -> float:
        """``E[x 1{|x| > 1}]``."""
        return self.x - truncate(self.x)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("Gaussian mark distribution needs positive variance")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def truncated_mean(self) -> float:
        m, s = self.mean, self.std
        a, b = (-TRUNCATION_BOUND - m) / s, (TRUNCATION_BOUND - m) / s
        return m * (stats.norm.cdf(b) - stats.norm.cdf(a)) + s * (stats.norm.pdf(a) - stats.norm.pdf(b))

    def big_jump_mean(self) -> float:
        return self.mean - self.truncated_mean()

    def cdf(self, x):
        return stats.norm.cdf(x, loc=self.mean, scale=self.std)


MarkDistribution = PointMass | Gaussian


@dataclass(frozen=True)
class JumpKernelAtoms:
    """Finite sum of point masses: ``sum_i intensity_i * delta_{mark_i}``."""

    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        kept = []
        for mark, intensity in self.atoms:
            if intensity < 0:
                raise ValueError(f"negative intensity {intensity}")
            if abs(mark) <= ZERO_MARK or intensity == 0:
                continue
            kept.append((float(mark), float(intensity)))
        object.__setattr__(self, "atoms", tuple(kept))

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self) -> Iterator[tuple[float, float]]:
        return iter(self.atoms)

    @property
    def total_intensity(self) -> float:
        return sum(i for _, i in self.atoms)


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class JumpEvents:
    """Jump events of one process, flattened over paths."""

    path: np.ndarray
    index: np.ndarray
    time: np.ndarray
    mark: np.ndarray

    def __post_init__(self):
        n = len(self.path)
        for name in ("index", "time", "mark"):
            if len(getattr(self, name)) != n:
                raise ShapeError("jump event arrays must have equal length")
        object.__setattr__(self, "path", _frozen(self.path, np.int64))
        object.__setattr__(self, "index", _frozen(self.index, np.int64))
        object.__setattr__(self, "time", _frozen(self.time))
        object.__setattr__(self, "mark", _frozen(self.mark))

    @classmethod
    def empty(cls) -> "JumpEvents":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), np.zeros(0))

    def __len__(self) -> int:
        return len(self.path)

    def for_path(self, i: int) -> "JumpEvents":
        sel = self.path == i
        return JumpEvents(self.path[sel], self.index[sel], self.time[sel], self.mark[sel])

    def where(self, mask) -> "JumpEvents":
        mask = np.asarray(mask, dtype=bool)
        return JumpEvents(self.path[mask], self.index[mask], self.time[mask], self.mark[mask])

    def cell_sums(self, n_paths: int, size: int, values=None) -> np.ndarray:
        """Sum ``values`` (default: the marks) into an ``(n_paths, size)`` array."""
        out = np.zeros((n_paths, size))
        v = self.mark if values is None else np.asarray(values, dtype=float)
        np.add.at(out, (self.path, self.index), v)
        return out


@dataclass(frozen=True)
class PathBundle:
    """Simulated paths of one model family on a common grid.

    ``series`` maps process names to ``(n_paths, grid.size)`` arrays and
    ``jumps`` maps a subset of those names to their exact jump events.
    ``meta`` carries per-path scalars a family needs later (event times,
    terminal draws) and ``family`` names the model that produced the bundle.
    """

    grid: TimeGrid
    n_paths: int
    series: Mapping[str, np.ndarray]
    jumps: Mapping[str, JumpEvents] = field(default_factory=dict)
    rng_seed: int = 0
    family: str = ""
    meta: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")
        shape = (self.n_paths, self.grid.size)
        frozen = {}
        for name, arr in self.series.items():
            a = _frozen(arr)
            if a.shape != shape:
                raise ShapeError(f"series {name!r} has shape {a.shape}, expected {shape}")
            frozen[name] = a
        for name in self.jumps:
            if name not in frozen:
                raise ShapeError(f"jumps recorded for unknown series {name!r}")
        object.__setattr__(self, "series", frozen)
        object.__setattr__(self, "jumps", dict(self.jumps))
        object.__setattr__(self, "meta", {k: _frozen(v) for k, v in self.meta.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.series[name]
        except KeyError:
            raise KeyError(f"unknown series {name!r}; have {sorted(self.series)}") from None

    def jump_events(self, name: str) -> JumpEvents:
        if name not in self.series:
            raise KeyError(f"unknown series {name!r}")
        return self.jumps.get(name, JumpEvents.empty())

    def jumps_for(self, path: int) -> list[tuple[int, float, str]]:
        """Per-path view: ``(grid index, mark, process name)`` sorted by time."""
        rows = []
        for name, ev in self.jumps.items():
            sub = ev.for_path(path)
            rows.extend((int(k), float(m), name, float(t)) for k, m, t in zip(sub.index, sub.mark, sub.time))
        rows.sort(key=lambda r: (r[3], r[2]))
        return [r[:3] for r in rows]

    def subset(self, keep) -> "PathBundle":
        """Bundle restricted to the paths where ``keep`` is true (renumbered)."""
        keep = np.asarray(keep, dtype=bool)
        new_id = np.cumsum(keep) - 1
        n = int(keep.sum())
        series = {k: v[keep] for k, v in self.series.items()}
        jumps = {}
        for k, ev in self.jumps.items():
            sel = keep[ev.path]
            jumps[k] = JumpEvents(new_id[ev.path[sel]], ev.index[sel], ev.time[sel], ev.mark[sel])
        meta = {k: v[keep] if np.ndim(v) and len(v) == self.n_paths else v for k, v in self.meta.items()}
        return PathBundle(self.grid, n, series, jumps, self.rng_seed, self.family, meta)

    def with_series(self, name: str, values, jumps: JumpEvents | None = None) -> "PathBundle":
        series = dict(self.series)
        series[name] = values
        all_jumps = dict(self.jumps)
        if jumps is not None:
            all_jumps[name] = jumps
        else:
            all_jumps.pop(name, None)
        return PathBundle(self.grid, self.n_paths, series, all_jumps, self.rng_seed, self.family, self.meta)


def cutoff_process(bundle: PathBundle, name: str, policy: TruncationPolicy = STANDARD_TRUNCATION) -> np.ndarray:
    """``X_t - X_0 - sum_{s<=t} (dX_s - chi(dX_s))`` for a recorded series."""
    x = bundle[name]
    ev = bundle.jump_events(name)
    big = ev.cell_sums(bundle.n_paths, bundle.grid.size, ev.mark - policy(ev.mark))
    return x - x[:, :1] - np.cumsum(big, axis=1)


def continuous_increments(bundle: PathBundle, name: str) -> np.ndarray:
    """Cell increments of a series with its recorded jumps removed, shape ``(n, steps)``."""
    x = bundle[name]
    ev = bundle.jump_events(name)
    jumps = ev.cell_sums(bundle.n_paths, bundle.grid.size)
    return np.diff(x, axis=1) - jumps[:, 1:]


def realized_bracket(bundle: PathBundle, name: str) -> np.ndarray:
    """Discrete ``[X]``: squared continuous increments plus squared exact marks."""
    cont = continuous_increments(bundle, name) ** 2
    ev = bundle.jump_events(name)
    jumps2 = ev.cell_sums(bundle.n_paths, bundle.grid.size, ev.mark**2)
    out = np.zeros((bundle.n_paths, bundle.grid.size))
    out[:, 1:] = np.cumsum(cont + jumps2[:, 1:], axis=1)
    return out


def left_integral(density, dt: float) -> np.ndarray:
    """Cumulative left-endpoint integral along the last axis, starting at zero."""
    d = np.asarray(density, dtype=float)
    out = np.zeros_like(d)
    out[..., 1:] = np.cumsum(d[..., :-1], axis=-1) * dt
    return out


# ---------------------------------------------------------------------------
# characteristics


def _as_rows(a, size: int, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != size:
        raise ShapeError(f"{name} must have shape (paths, {size}), got {arr.shape}")
    return arr


def _as_atoms(a, rows: int, size: int, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3 or arr.shape[1] != size:
        raise ShapeError(f"{name} must have shape (paths, {size}, atoms), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class DifferentialCharacteristics:
    """Pathwise ``(b a, c a, K a)`` on a grid.

    ``drift_density`` and ``diffusion_density`` are ``(P, size)`` with ``P`` either 1
    (deterministic, broadcast over paths) or the number of paths.  The jump
    kernel is stored as parallel ``(P, size, A)`` arrays of atom marks and
    intensities; an intensity of zero switches an atom off.
    """

    grid: TimeGrid
    drift_density: np.ndarray
    diffusion_density: np.ndarray
    jump_marks: np.ndarray | None = None
    jump_intensity: np.ndarray | None = None

    def __post_init__(self):
        size = self.grid.size
        drift = _as_rows(self.drift_density, size, "drift")
        diffusion = _as_rows(self.diffusion_density, size, "diffusion")
        if np.any(diffusion < 0):
            raise ValueError("diffusion density must be nonnegative")
        if self.jump_marks is None:
            marks = np.zeros((1, size, 0))
            inten = np.zeros((1, size, 0))
        else:
            marks = _as_atoms(self.jump_marks, 0, size, "jump_marks")
            inten = _as_atoms(self.jump_intensity, 0, size, "jump_intensity")
            if marks.shape != inten.shape:
                raise ShapeError("jump marks and intensities must have equal shapes")
            if np.any(inten < 0):
                raise ValueError("jump intensities must be nonnegative")
        rows = {drift.shape[0], diffusion.shape[0], marks.shape[0]} - {1}
        if len(rows) > 1:
            raise ShapeError(f"inconsistent path counts {sorted(rows)}")
        object.__setattr__(self, "drift_density", _frozen(drift))
        object.__setattr__(self, "diffusion_density", _frozen(diffusion))
        object.__setattr__(self, "jump_marks", _frozen(marks))
        object.__setattr__(self, "jump_intensity", _frozen(inten))

    @property
    def n_rows(self) -> int:
        return max(self.drift_density.shape[0], self.diffusion_density.shape[0], self.jump_marks.shape[0])

    @property
    def n_atoms(self) -> int:
        return self.jump_marks.shape[2]

    def kernel_at(self, path: int, k: int) -> JumpKernelAtoms:
        p = path if self.jump_marks.shape[0] > 1 else 0
        return JumpKernelAtoms(tuple(zip(self.jump_marks[p, k], self.jump_intensity[p, k])))

    def is_deterministic(self) -> bool:
        """True when every path carries the same characteristics."""

        def same(a):
            return a.shape[0] == 1 or bool(np.all(a == a[:1]))

        return all(same(a) for a in (self.drift_density, self.diffusion_density, self.jump_marks, self.jump_intensity))


@dataclass(frozen=True)
class CompensatorMeasure:
    """Compensator of a jump measure on a grid.

    The absolutely continuous part is a set of point-mass atoms per grid
    point (``ac_marks``/``ac_intensity`` of shape ``(P, size, A)``, intensity
    per unit time).  The atomic part puts a whole mark distribution at fixed
    grid indices, e.g. Gaussian jumps at integer times.
    """

    grid: TimeGrid
    ac_marks: np.ndarray
    ac_intensity: np.ndarray
    atomic_part: tuple[tuple[int, MarkDistribution], ...] = ()

    def __post_init__(self):
        size = self.grid.size
        marks = _as_atoms(self.ac_marks, 0, size, "ac_marks")
        inten = _as_atoms(self.ac_intensity, 0, size, "ac_intensity")
        if marks.shape != inten.shape:
            raise ShapeError("ac marks and intensities must have equal shapes")
        if np.any(inten < 0) or not np.all(np.isfinite(inten)):
            raise ValueError("intensities must be finite and nonnegative")
        inten = np.where(np.abs(marks) <= ZERO_MARK, 0.0, inten)
        for k, _ in self.atomic_part:
            if not 0 <= k < size:
                raise ValueError(f"atomic time index {k} is off the grid")
        object.__setattr__(self, "ac_marks", _frozen(marks))
        object.__setattr__(self, "ac_intensity", _frozen(inten))
        object.__setattr__(self, "atomic_part", tuple((int(k), d) for k, d in self.atomic_part))

    @classmethod
    def empty(cls, grid: TimeGrid) -> "CompensatorMeasure":
        z = np.zeros((1, grid.size, 0))
        return cls(grid, z, z)

    @property
    def n_rows(self) -> int:
        return self.ac_marks.shape[0]

    def is_empty(self) -> bool:
        return not self.atomic_part and not np.any(self.ac_intensity > 0)

    def ac_part(self, k: int, path: int = 0) -> list[tuple[PointMass, float]]:
        p = path if self.n_rows > 1 else 0
        return [
            (PointMass(float(m)), float(i))
            for m, i in zip(self.ac_marks[p, k], self.ac_intensity[p, k])
            if i > 0
        ]

    def total_intensity(self) -> np.ndarray:
        """Absolutely continuous intensity per grid point, shape ``(P, size)``."""
        return self.ac_intensity.sum(axis=2)

    def _cumulate(self, ac_density: np.ndarray, per_atom) -> np.ndarray:
        out = left_integral(ac_density, self.grid.dt)
        for k, dist in self.atomic_part:
            out[:, k:] += per_atom(dist)
        return out

    def mass(self) -> np.ndarray:
        """Cumulative ``nu((0, t] x R)``."""
        return self._cumulate(self.total_intensity(), lambda d: 1.0)

    def big_jump_integral(self) -> np.ndarray:
        """Cumulative ``int int_{|x|>1} x nu(ds, dx)``."""
        m = self.ac_marks
        dens = (np.where(np.abs(m) > TRUNCATION_BOUND, m, 0.0) * self.ac_intensity).sum(axis=2)
        return self._cumulate(dens, lambda d: d.big_jump_mean())

    def truncated_integral(self) -> np.ndarray:
        """Cumulative ``int int chi(x) nu(ds, dx)``."""
        dens = (truncate(self.ac_marks) * self.ac_intensity).sum(axis=2)
        return self._cumulate(dens, lambda d: d.truncated_mean())

    def image(self, factor) -> "CompensatorMeasure":
        """Push every ac atom through ``x -> factor * x``; zero images are dropped.

        ``factor`` is ``(P, size)`` (or broadcastable).  Atomic parts are not
        supported by the image construction.
        """
        if self.atomic_part:
            raise ValueError("image of an atomic compensator is not defined here")
        f = np.asarray(factor, dtype=float)
        if f.ndim == 1:
            f = f[None, :]
        marks = self.ac_marks * f[:, :, None]
        inten = np.broadcast_to(self.ac_intensity, marks.shape)
        inten = np.where(np.abs(marks) <= ZERO_MARK, 0.0, inten)
        return CompensatorMeasure(self.grid, marks, inten)


@dataclass(frozen=True)
class CharacteristicReport:
    """Cumulative characteristics ``(B, C, nu)`` on a grid.

    ``first``/``second`` are ``(P, size)``: one row for deterministic
    answers or one row per path.  ``first_se``/``second_se`` are standard
    errors of the cross-path means when the values were estimated.
    ``modified_first`` is ``B + int int_{|x|>1} x nu`` when it was formed.
    """

    grid: TimeGrid
    first: np.ndarray
    second: np.ndarray
    jump_compensator: CompensatorMeasure
    first_se: np.ndarray | None = None
    second_se: np.ndarray | None = None
    modified_first: np.ndarray | None = None

    def __post_init__(self):
        size = self.grid.size
        first = _as_rows(self.first, size, "first")
        second = _as_rows(self.second, size, "second")
        if np.any(first[:, 0] != 0) or np.any(second[:, 0] != 0):
            raise ValueError("characteristics must start at zero")
        if np.any(np.diff(second, axis=1) < -1e-12):
            raise ValueError("second characteristic must be nondecreasing")
        object.__setattr__(self, "first", _frozen(first))
        object.__setattr__(self, "second", _frozen(second))
        for name in ("first_se", "second_se"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frozen(np.broadcast_to(v, (size,))))
        if self.modified_first is not None:
            object.__setattr__(self, "modified_first", _frozen(_as_rows(self.modified_first, size, "modified_first")))

    def mean_first(self) -> np.ndarray:
        return self.first.mean(axis=0)

    def mean_second(self) -> np.ndarray:
        return self.second.mean(axis=0)


def integrate_characteristics(diff: DifferentialCharacteristics, grid: TimeGrid) -> CharacteristicReport:
    """Turn densities into cumulative characteristics by left-endpoint sums."""
    if diff.grid != grid:
        raise ShapeError(f"characteristics live on {diff.grid}, not {grid}")
    first = left_integral(diff.drift_density, grid.dt)
    second = left_integral(diff.diffusion_density, grid.dt)
    nu = CompensatorMeasure(grid, diff.jump_marks, diff.jump_intensity)
    return CharacteristicReport(grid, first, second, nu)


def standard_error(samples: np.ndarray, axis: int = 0) -> np.ndarray:
    """Sample standard deviation over ``axis`` divided by sqrt(count)."""
    n = samples.shape[axis]
    if n < 2:
        return np.zeros(np.delete(samples.shape, axis))
    return samples.std(axis=axis, ddof=1) / math.sqrt(n)


def stack_rows(rows: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(r, dtype=float) for r in rows])
