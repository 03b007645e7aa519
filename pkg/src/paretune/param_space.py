"""Discretized 4-D parameter space: Ewald alpha, cutoff, interpolation order, FFT grid."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

from .errors import ConfigError, EmptyGridSet

VARIANTS = ("ad", "ik")

# Relative slack when rounding an ideal per-dimension count up, so that a ratio
# like 176.16/11.01 evaluating to 16.000000000000004 does not skip 160 -> 162.
_ROUND_SLACK = 1e-9


def is_five_smooth(n: int) -> bool:
    """True iff ``n`` has no prime factor other than 2, 3 and 5."""
    if n < 1:
        raise ValueError("is_five_smooth requires n >= 1")
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class Interfacial:
    """Particles confined to a centered box inside the domain."""

    box_x: float
    box_y: float
    box_z: float


@dataclass(frozen=True)
class SystemDescription:
    domain_x: float
    domain_y: float
    domain_z: float
    n_particles: int
    n_procs: int = 1
    dispersion_coeff: float = 1.0
    geometry: Optional[Interfacial] = None  # None means bulk
    timesteps_per_sample: int = 1000

    def __post_init__(self):
        dims = (self.domain_x, self.domain_y, self.domain_z)
        if min(dims) <= 0:
            raise ConfigError(f"domain lengths must be > 0, got {dims}")
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")
        if self.n_procs < 1:
            raise ConfigError("n_procs must be >= 1")
        if not self.dispersion_coeff > 0:
            raise ConfigError("dispersion_coeff must be > 0")
        if self.timesteps_per_sample < 1:
            raise ConfigError("timesteps_per_sample must be >= 1")
        if self.geometry is not None:
            box = (self.geometry.box_x, self.geometry.box_y, self.geometry.box_z)
            if min(box) <= 0 or any(b > d for b, d in zip(box, dims)):
                raise ConfigError(f"interfacial box {box} must fit inside domain {dims}")

    @property
    def dims(self) -> tuple[float, float, float]:
        return (self.domain_x, self.domain_y, self.domain_z)

    @property
    def volume(self) -> float:
        return self.domain_x * self.domain_y * self.domain_z

    @property
    def is_bulk(self) -> bool:
        return self.geometry is None


@dataclass(frozen=True)
class ParameterRanges:
    alpha_min: float = 0.01
    alpha_max: float = 1.00
    alpha_step: float = 0.01
    cutoff_min: float = 2.0
    cutoff_max: float = 6.0
    cutoff_step: float = 0.1
    orders: tuple[int, ...] = (2, 3, 4, 5, 6)
    grid_point_factor: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(sorted(set(int(p) for p in self.orders))))
        if not 0 < self.alpha_min <= self.alpha_max:
            raise ConfigError("need 0 < alpha_min <= alpha_max")
        if not 0 < self.cutoff_min <= self.cutoff_max:
            raise ConfigError("need 0 < cutoff_min <= cutoff_max")
        if self.alpha_step <= 0 or self.cutoff_step <= 0:
            raise ConfigError("discretization steps must be > 0")
        if not self.orders or min(self.orders) < 2:
            raise ConfigError("orders must be a nonempty set of integers >= 2")
        if self.grid_point_factor <= 0:
            raise ConfigError("grid_point_factor must be > 0")


@dataclass(frozen=True, order=True)
class GridSize:
    """FFT mesh. Ordering is by total points, then nx, ny, nz."""

    sort_key: tuple = field(init=False, repr=False, compare=True)
    nx: int = field(compare=False)
    ny: int = field(compare=False)
    nz: int = field(compare=False)

    def __init__(self, nx: int, ny: int, nz: int):
        for n in (nx, ny, nz):
            if n < 1 or not is_five_smooth(n):
                raise ValueError(f"grid dimension {n} is not a positive 5-smooth integer")
        object.__setattr__(self, "nx", int(nx))
        object.__setattr__(self, "ny", int(ny))
        object.__setattr__(self, "nz", int(nz))
        object.__setattr__(self, "sort_key", (nx * ny * nz, nx, ny, nz))

    @property
    def points(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    def __repr__(self) -> str:
        return f"GridSize({self.nx}x{self.ny}x{self.nz})"

    def __str__(self) -> str:
        return f"{self.nx}x{self.ny}x{self.nz}"


UNIT_GRID = GridSize(1, 1, 1)


@dataclass(frozen=True)
class Configuration:
    alpha: float
    cutoff: float
    order: int
    grid: GridSize
    variant: str = "ik"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")


@lru_cache(maxsize=32)
def five_smooth_upto(limit: int) -> tuple[int, ...]:
    out = []
    p2 = 1
    while p2 <= limit:
        p3 = p2
        while p3 <= limit:
            p5 = p3
            while p5 <= limit:
                out.append(p5)
                p5 *= 5
            p3 *= 3
        p2 *= 2
    return tuple(sorted(out))


def smooth_ceil(x: float) -> int:
    """Smallest 5-smooth integer >= x (x > 0)."""
    target = max(1, math.ceil(x * (1.0 - _ROUND_SLACK)))
    # a power of two >= target always exists below 2*target
    table = five_smooth_upto(2 * target)
    return table[bisect.bisect_left(table, target)]


def enumerate_grid_sizes(system: SystemDescription, ranges: ParameterRanges) -> list[GridSize]:
    """All domain-proportional 5-smooth grids with at most ``factor * N`` points.

    A candidate mesh spacing is generated by pinning one dimension to a
    5-smooth count ``m``; the other two dimensions take the smallest 5-smooth
    count >= their proportional ideal. Spacings that would leave fewer than
    two points along the shortest dimension are skipped.
    """
    bound = ranges.grid_point_factor * system.n_particles
    dims = system.dims
    grids = set()
    for anchor in range(3):
        # the anchored dimension alone is bounded by bound / (2 * 2)
        for m in five_smooth_upto(max(2, int(bound // 4))):
            ideals = [d * m / dims[anchor] for d in dims]
            if min(ideals) < 2.0 * (1.0 - _ROUND_SLACK):
                continue
            shape = [m if d == anchor else smooth_ceil(ideals[d]) for d in range(3)]
            if shape[0] * shape[1] * shape[2] > bound:
                # counts are non-decreasing in m along a fixed anchor
                break
            grids.add(GridSize(*shape))
    if not grids:
        raise EmptyGridSet(
            f"no 5-smooth grid with >= 2 points per dimension fits within "
            f"{ranges.grid_point_factor:g} * {system.n_particles} points"
        )
    return sorted(grids)


def lattice(lo: float, hi: float, step: float) -> list[float]:
    """``lo + i*step`` for i = 0..floor((hi-lo)/step), rounded to kill drift."""
    count = math.floor((hi - lo) / step + 1e-9) + 1
    digits = max(0, -math.floor(math.log10(step)) + 6)
    return [round(lo + i * step, digits) for i in range(count)]


@dataclass(frozen=True)
class SearchSpace:
    system: SystemDescription
    ranges: ParameterRanges
    alphas: tuple[float, ...]
    cutoffs: tuple[float, ...]
    grids: tuple[GridSize, ...]
    orders: tuple[int, ...]

    @property
    def size(self) -> int:
        """Logical number of 4-D configurations (never materialized)."""
        return len(self.alphas) * len(self.cutoffs) * len(self.grids) * len(self.orders)

    @property
    def n_perf_points(self) -> int:
        return len(self.cutoffs) * len(self.grids) * len(self.orders)

    def alpha_index(self, alpha: float) -> int:
        i = round((alpha - self.ranges.alpha_min) / self.ranges.alpha_step)
        if not 0 <= i < len(self.alphas):
            raise IndexError(f"alpha {alpha} outside the lattice")
        return i

    def cutoff_index(self, cutoff: float) -> int:
        i = round((cutoff - self.ranges.cutoff_min) / self.ranges.cutoff_step)
        if not 0 <= i < len(self.cutoffs):
            raise IndexError(f"cutoff {cutoff} outside the lattice")
        return i


def build_search_space(system: SystemDescription, ranges: Optional[ParameterRanges] = None) -> SearchSpace:
    ranges = ranges or ParameterRanges()
    return SearchSpace(
        system=system,
        ranges=ranges,
        alphas=tuple(lattice(ranges.alpha_min, ranges.alpha_max, ranges.alpha_step)),
        cutoffs=tuple(lattice(ranges.cutoff_min, ranges.cutoff_max, ranges.cutoff_step)),
        grids=tuple(enumerate_grid_sizes(system, ranges)),
        orders=ranges.orders,
    )


def restrict_grids(grids: Sequence[GridSize], lo: GridSize, hi: GridSize) -> list[GridSize]:
    """Grids of ``grids`` (sorted) lying between ``lo`` and ``hi`` inclusive."""
    return [g for g in grids if lo <= g <= hi]
