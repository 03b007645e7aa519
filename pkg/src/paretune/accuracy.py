"""Error bounds, accurate/inaccurate partition, and the Pareto frontier."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence, Union

import numpy as np

from . import kernels
from .errors import ConfigError, EmptyAccurateSubspace, NonPositiveParameter, ParetuneError
from .param_space import Configuration, GridSize, SearchSpace, SystemDescription


@dataclass(frozen=True)
class Combined:
    """Single threshold on the RMS of the real and reciprocal errors."""

    threshold: float

    def __post_init__(self):
        if not self.threshold >= 0:
            raise ConfigError("accuracy threshold must be >= 0")


@dataclass(frozen=True)
class Split:
    real_threshold: float
    recip_threshold: float

    def __post_init__(self):
        if not (self.real_threshold >= 0 and self.recip_threshold >= 0):
            raise ConfigError("accuracy thresholds must be >= 0")


AccuracySpec = Union[Combined, Split]


@dataclass(frozen=True)
class ErrorEstimate:
    real_err: float
    recip_err: float

    @property
    def rms(self) -> float:
        return math.sqrt(self.real_err**2 + self.recip_err**2)

    def satisfies(self, spec: "AccuracySpec") -> bool:
        if isinstance(spec, Split):
            return self.real_err <= spec.real_threshold and self.recip_err <= spec.recip_threshold
        return self.rms <= spec.threshold


def estimate_errors(config: Configuration, system: SystemDescription, model) -> ErrorEstimate:
    """Both error estimates for one full configuration."""
    return ErrorEstimate(
        real_space_error(config.alpha, config.cutoff, system),
        model.eval(config.alpha, config.grid, config.order, system, config.variant),
    )


def real_space_error(alpha: float, cutoff: float, system: SystemDescription) -> float:
    """Upper bound on the RMS real-space force error (units of epsilon/sigma)."""
    if alpha <= 0 or cutoff <= 0:
        raise NonPositiveParameter(f"alpha and cutoff must be > 0 (got alpha={alpha}, cutoff={cutoff})")
    c = system.dispersion_coeff
    n = system.n_particles
    v = system.volume
    ra = cutoff * alpha
    poly = 6.0 / ra**6 + 6.0 / ra**4 + 3.0 / ra**2 + 1.0
    return c * math.sqrt(math.pi) * alpha**5 / math.sqrt(n * v * cutoff) * poly * math.exp(-(ra**2))


class ReciprocalErrorModel(Protocol):
    """Reciprocal-space error bound.

    Implementations must be non-decreasing in alpha and non-increasing in the
    order and in every grid dimension, and safe to call from several threads.
    """

    def eval(self, alpha: float, grid: GridSize, order: int, system: SystemDescription, variant: str) -> float:
        ...


def eval_alphas(model, alphas, grid, order, system, variant) -> np.ndarray:
    """Vectorized evaluation over an alpha list; uses ``model.eval_alphas`` when present."""
    fast = getattr(model, "eval_alphas", None)
    if fast is not None:
        return np.asarray(fast(alphas, grid, order, system, variant), dtype=np.float64)
    return np.array([model.eval(a, grid, order, system, variant) for a in alphas], dtype=np.float64)


def max_spacing(grid: GridSize, system: SystemDescription) -> float:
    return max(d / n for d, n in zip(system.dims, grid.shape))


@dataclass(frozen=True)
class SurrogateModel:
    """Desk-scale stand-in for the reciprocal bound: ``ck * alpha * (alpha * h_max) ** order``.

    ``ck`` may be a single constant or a per-variant mapping.
    """

    ck: Union[float, Mapping[str, float]] = 1.0

    def _ck(self, variant: str) -> float:
        if isinstance(self.ck, Mapping):
            return float(self.ck[variant])
        return float(self.ck)

    def eval(self, alpha, grid, order, system, variant="ik") -> float:
        if alpha <= 0:
            raise NonPositiveParameter("alpha must be > 0")
        return self._ck(variant) * alpha * (alpha * max_spacing(grid, system)) ** order

    def eval_alphas(self, alphas, grid, order, system, variant="ik") -> np.ndarray:
        a = np.asarray(alphas, dtype=np.float64)
        return self._ck(variant) * a * (a * max_spacing(grid, system)) ** order


class MissingTableEntry(ParetuneError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class TabulatedModel:
    """Reciprocal errors read from a table produced by an external evaluator.

    CSV header: ``nx,ny,nz,order,alpha,recip_err``. Lookups are exact on the
    alpha lattice (alphas compared after rounding to 9 decimals).
    """

    HEADER = ("nx", "ny", "nz", "order", "alpha", "recip_err")

    def __init__(self, table: Mapping[tuple, float]):
        self._table = dict(table)

    @staticmethod
    def _key(nx, ny, nz, order, alpha) -> tuple:
        return (int(nx), int(ny), int(nz), int(order), round(float(alpha), 9))

    @classmethod
    def from_csv(cls, path) -> "TabulatedModel":
        table = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != cls.HEADER:
                raise ConfigError(f"{path}: expected header {','.join(cls.HEADER)}, got {reader.fieldnames}")
            for row in reader:
                key = cls._key(row["nx"], row["ny"], row["nz"], row["order"], row["alpha"])
                table[key] = float(row["recip_err"])
        return cls(table)

    def eval(self, alpha, grid, order, system=None, variant="ik") -> float:
        key = self._key(grid.nx, grid.ny, grid.nz, order, alpha)
        try:
            return self._table[key]
        except KeyError:
            raise MissingTableEntry(f"no tabulated reciprocal error for grid {grid}, order {order}, alpha {alpha}")

    def __len__(self) -> int:
        return len(self._table)


def splitting_alpha_index(grid, order, recip_threshold, model, space: SearchSpace, variant="ik") -> int:
    """Index of the largest lattice alpha whose reciprocal error is within threshold, or -1."""
    system = space.system
    alphas = space.alphas

    def ok(i):
        return model.eval(alphas[i], grid, order, system, variant) <= recip_threshold

    if not ok(0):
        return -1
    lo, hi = 0, len(alphas) - 1
    if ok(hi):
        return hi
    # invariant: ok(lo) and not ok(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def splitting_alpha(grid, order, recip_threshold, model, space: SearchSpace, variant="ik") -> Optional[float]:
    """Largest lattice alpha with reciprocal error <= threshold; ``None`` when none is feasible."""
    i = splitting_alpha_index(grid, order, recip_threshold, model, space, variant)
    return None if i < 0 else space.alphas[i]


@dataclass(frozen=True, order=True)
class PerfPoint:
    """A point of the 3-D (cutoff, grid, order) performance space with its feasible alpha interval."""

    sort_key: tuple = field(init=False, repr=False)
    cutoff: float = field(compare=False)
    grid: GridSize = field(compare=False)
    order: int = field(compare=False)
    alpha_lo: float = field(compare=False)
    alpha_hi: float = field(compare=False)
    chosen_alpha: float = field(compare=False)

    def __init__(self, cutoff, grid, order, alpha_lo, alpha_hi, chosen_alpha):
        object.__setattr__(self, "cutoff", cutoff)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "alpha_lo", alpha_lo)
        object.__setattr__(self, "alpha_hi", alpha_hi)
        object.__setattr__(self, "chosen_alpha", chosen_alpha)
        object.__setattr__(self, "sort_key", (cutoff, grid.points, order, grid.shape))

    @property
    def key(self) -> tuple:
        return (self.cutoff, self.grid, self.order)


@dataclass
class AccurateSubspace:
    """Partition result.

    ``lo`` and ``hi`` are int arrays of shape (cutoffs, grids, orders) holding
    the feasible alpha-index interval of each perf point, -1 where inaccurate.
    """

    space: SearchSpace
    spec: AccuracySpec
    variant: str
    lo: np.ndarray
    hi: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return self.lo >= 0

    def __len__(self) -> int:
        return int(self.mask.sum())

    def point(self, c: int, g: int, o: int) -> PerfPoint:
        lo, hi = int(self.lo[c, g, o]), int(self.hi[c, g, o])
        alphas = self.space.alphas
        return PerfPoint(
            cutoff=self.space.cutoffs[c],
            grid=self.space.grids[g],
            order=self.space.orders[o],
            alpha_lo=alphas[lo],
            alpha_hi=alphas[hi],
            chosen_alpha=alphas[(lo + hi) // 2],
        )

    @property
    def points(self) -> list[PerfPoint]:
        return sorted(self.point(c, g, o) for c, g, o in zip(*np.nonzero(self.mask)))

    @property
    def cutoff_range(self) -> tuple[float, float]:
        cs = np.flatnonzero(self.mask.any(axis=(1, 2)))
        return self.space.cutoffs[cs[0]], self.space.cutoffs[cs[-1]]

    @property
    def accurate_orders(self) -> list[int]:
        return [self.space.orders[o] for o in np.flatnonzero(self.mask.any(axis=(0, 1)))]

    def grid_range(self, order: int) -> tuple[GridSize, GridSize]:
        o = self.space.orders.index(order)
        gs = np.flatnonzero(self.mask[:, :, o].any(axis=0))
        return self.space.grids[gs[0]], self.space.grids[gs[-1]]


@dataclass(frozen=True)
class Frontier:
    points: tuple[PerfPoint, ...]

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def orders(self) -> list[int]:
        return sorted({p.order for p in self.points})


def _recip_table(space, model, variant, jobs) -> np.ndarray:
    cells = [(g, p) for g in space.grids for p in space.orders]

    def one(cell):
        return eval_alphas(model, space.alphas, cell[0], cell[1], space.system, variant)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, cells))
    else:
        rows = [one(c) for c in cells]
    return np.vstack(rows)  # (grids*orders, alphas)


def _real_table(space) -> np.ndarray:
    s = space.system
    return kernels.real_error_table(
        np.asarray(space.alphas), np.asarray(space.cutoffs), s.dispersion_coeff, s.n_particles, s.volume
    )


def _raise_empty(space, spec, model, variant, real, recip=None):
    if recip is None:
        recip = _recip_table(space, model, variant, 1)
    n_g, n_o = len(space.grids), len(space.orders)
    with np.errstate(divide="ignore", invalid="ignore"):
        if isinstance(spec, Split):
            # (C, 1, A) vs (1, K, A): worst of the two normalized errors
            score = np.maximum(real[:, None, :] / spec.real_threshold, recip[None, :, :] / spec.recip_threshold)
        else:
            rms = np.sqrt(real[:, None, :] ** 2 + recip[None, :, :] ** 2)
            score = rms / spec.threshold
    if not np.isfinite(score).any():
        # zero thresholds: rank by raw error instead
        score = np.maximum(real[:, None, :], recip[None, :, :])
    c, k, a = np.unravel_index(int(np.nanargmin(score)), score.shape)
    closest = (space.cutoffs[c], space.grids[k // n_o], space.orders[k % n_o], space.alphas[a])
    margin = float(score[c, k, a])
    raise EmptyAccurateSubspace(
        f"no accurate configuration for {spec}; closest is cutoff={closest[0]}, grid={closest[1]}, "
        f"order={closest[2]}, alpha={closest[3]} (error/threshold = {margin:.4g}, "
        f"real={real[c, a]:.4g}, recip={recip[k, a]:.4g})",
        margin=margin,
        closest=closest,
    )


def partition_space(space: SearchSpace, spec: AccuracySpec, model, variant: str = "ik", jobs: int = 1) -> AccurateSubspace:
    """Label every (cutoff, grid, order) accurate iff some lattice alpha satisfies ``spec``.

    Split thresholds use the interval shortcut: the real bound falls with
    alpha, the reciprocal one rises, so the feasible alphas are
    ``[first alpha passing real, splitting alpha]``. Combined thresholds are
    scanned per alpha and the widest feasible run is kept.
    """
    n_c, n_g, n_o = len(space.cutoffs), len(space.grids), len(space.orders)
    n_a = len(space.alphas)
    real = _real_table(space)

    if isinstance(spec, Split):
        passing = real <= spec.real_threshold
        real_lo = np.where(passing.any(axis=1), passing.argmax(axis=1), n_a)  # (C,)
        cells = [(g, p) for g in space.grids for p in space.orders]

        def one(cell):
            return splitting_alpha_index(cell[0], cell[1], spec.recip_threshold, model, space, variant)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                split = np.array(list(pool.map(one, cells)), dtype=np.int64)
        else:
            split = np.array([one(c) for c in cells], dtype=np.int64)
        lo = np.broadcast_to(real_lo[:, None], (n_c, len(cells))).astype(np.int64)
        hi = np.broadcast_to(split[None, :], (n_c, len(cells))).astype(np.int64)
        empty = lo > hi
        lo[empty] = -1
        hi[empty] = -1
        recip = None
    elif isinstance(spec, Combined):
        recip = _recip_table(space, model, variant, jobs)
        lo, hi = kernels.widest_feasible_runs(real, recip, spec.threshold)
    else:
        raise TypeError(f"unsupported accuracy spec {spec!r}")

    lo = np.asarray(lo).reshape(n_c, n_g, n_o)
    hi = np.asarray(hi).reshape(n_c, n_g, n_o)
    if not (lo >= 0).any():
        _raise_empty(space, spec, model, variant, real, recip)
    return AccurateSubspace(space=space, spec=spec, variant=variant, lo=lo, hi=hi)


def frontier_keys(points: Sequence[PerfPoint]) -> np.ndarray:
    """Integer dominance keys: (cutoff rank, grid points, order)."""
    cut_rank = {c: i for i, c in enumerate(sorted({p.cutoff for p in points}))}
    return np.array([(cut_rank[p.cutoff], p.grid.points, p.order) for p in points], dtype=np.int64).reshape(-1, 3)


def extract_frontier(sub: AccurateSubspace) -> Frontier:
    """Pareto-minimal accurate points under (cutoff, grid points, order)."""
    pts = sub.points
    if not pts:
        raise EmptyAccurateSubspace("cannot extract a frontier from an empty subspace")
    mask = kernels.pareto_mask(frontier_keys(pts))
    return Frontier(tuple(p for p, m in zip(pts, mask) if m))


def load_reciprocal_model(spec: Mapping, base_dir: Path | None = None, default_ck: float = 1.0):
    """Build a reciprocal error model from its config entry."""
    kind = spec.get("model", "surrogate")
    if kind == "surrogate":
        return SurrogateModel(ck=spec.get("ck", default_ck))
    if kind == "tabulated":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return TabulatedModel.from_csv(path)
    raise ConfigError(f"unknown reciprocal error model {kind!r}")
