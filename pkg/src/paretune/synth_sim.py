"""Synthetic PPPM timing generator.

Stands in for a real simulation code at desk scale: real-space time grows
with the cube of the cutoff, reciprocal time is linear in the grid size per
interpolation order, with a step offset once ``nz`` reaches the process count
and a linear dependence on the cutoff. Noise is multiplicative and
deterministic per (seed, configuration, phase, repeat).
"""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .accuracy import AccuracySpec, Combined, Split, SurrogateModel
from .errors import ConfigError, EmptyAccurateSubspace, UnknownOrder
from .param_space import Configuration, GridSize, SearchSpace
from .sampling import Phase

SQRT_PI = np.sqrt(np.pi)

# reference coefficients per 1000 timesteps; order 5 uses the measured
# (1.81 s, 8.33e-5 s/point) pair, the other orders scale the overhead with p^3
DEFAULT_RECIP = {
    2: (0.116, 8.33e-5),
    3: (0.391, 8.33e-5),
    4: (0.927, 8.33e-5),
    5: (1.81, 8.33e-5),
    6: (3.128, 8.33e-5),
}


@dataclass(frozen=True)
class SynthParams:
    a_r: float = 0.44
    b_r: float = 0.0565
    recip: Mapping[int, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_RECIP))
    shift_mag: float = 0.5
    gamma_rc: float = 0.05
    noise_frac: float = 0.02
    rng_seed: int = 0
    n_procs: int = 8
    surrogate_ck: float = 1.0

    def __post_init__(self):
        recip = {int(k): (float(v[0]), float(v[1])) for k, v in dict(self.recip).items()}
        object.__setattr__(self, "recip", recip)
        coeffs = [self.a_r, self.b_r, self.shift_mag, self.gamma_rc] + [c for pb in recip.values() for c in pb]
        if min(coeffs) < 0:
            raise ConfigError("synthetic time coefficients must be >= 0")
        if not 0 <= self.noise_frac <= 0.2:
            raise ConfigError("noise_frac must lie in [0, 0.2]")
        if self.n_procs < 1:
            raise ConfigError("n_procs must be >= 1")
        if not self.surrogate_ck > 0:
            raise ConfigError("surrogate_ck must be > 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthParams":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown synthetic parameters: {sorted(extra)}")
        return cls(**d)


def _noise_factor(config: Configuration, phase: Phase, params: SynthParams, repeat: int) -> float:
    if params.noise_frac == 0:
        return 1.0
    g = config.grid
    key = struct.pack(
        "<ddqqqq", config.alpha, config.cutoff, config.order, g.nx, g.ny, g.nz
    ) + f"{config.variant}|{Phase(phase).value}|{repeat}".encode()
    digest = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
    rng = np.random.default_rng(np.random.SeedSequence([params.rng_seed & 0xFFFFFFFFFFFFFFFF, digest]))
    return max(0.5, 1.0 + params.noise_frac * rng.standard_normal())


def _real_seconds(cutoff, params):
    return params.a_r + params.b_r * cutoff**3


def _recip_seconds(cutoff, grid, order, params):
    try:
        p, b = params.recip[order]
    except KeyError:
        raise UnknownOrder(f"no synthetic coefficients for interpolation order {order}")
    shift = params.shift_mag if grid.nz >= params.n_procs else 0.0
    return p + b * grid.points + shift + params.gamma_rc * cutoff


def synth_time(config: Configuration, phase: Phase, params: SynthParams, repeat: int = 0, timesteps: int = 1000) -> float:
    """Seconds for ``timesteps`` steps of one phase; coefficients are per 1000 steps."""
    phase = Phase(phase)
    if phase is Phase.REAL:
        base = _real_seconds(config.cutoff, params)
    elif phase is Phase.RECIP:
        base = _recip_seconds(config.cutoff, config.grid, config.order, params)
    else:
        base = _real_seconds(config.cutoff, params) + _recip_seconds(config.cutoff, config.grid, config.order, params)
    return base * (timesteps / 1000.0) * _noise_factor(config, phase, params, repeat)


def synth_recip_error(alpha, grid: GridSize, order: int, system, params: SynthParams) -> float:
    return SurrogateModel(params.surrogate_ck).eval(alpha, grid, order, system)


class SyntheticSampler:
    """Sampler backed by :func:`synth_time`; repeated calls draw fresh noise."""

    concurrent_safe = True

    def __init__(self, params: SynthParams):
        self.params = params
        self._counts: dict[tuple, int] = {}
        self._lock = threading.Lock()

    def measure(self, config: Configuration, phase: Phase, timesteps: int) -> float:
        key = (config, Phase(phase))
        with self._lock:
            rep = self._counts.get(key, 0)
            self._counts[key] = rep + 1
        return synth_time(config, phase, self.params, rep, timesteps)


def _real_errors(space: SearchSpace) -> np.ndarray:
    s = space.system
    a = np.array(space.alphas)[None, :]
    rc = np.array(space.cutoffs)[:, None]
    x2 = (a * rc) ** 2
    return (
        s.dispersion_coeff * SQRT_PI * a**5 / np.sqrt(s.n_particles * s.volume * rc)
        * (6 / x2**3 + 6 / x2**2 + 3 / x2 + 1) * np.exp(-x2)
    )


def _widest_run(flags: np.ndarray) -> tuple[int, int]:
    """Longest run of True (earliest on ties); Split feasibility is a single run anyway."""
    idx = np.flatnonzero(flags)
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [len(idx) - 1]))
    k = int(np.argmax(ends - starts))
    return int(idx[starts[k]]), int(idx[ends[k]])


def true_optimum(space: SearchSpace, spec: AccuracySpec, params: SynthParams, variant: str = "ik") -> Configuration:
    """Noise-free fastest accurate configuration by exhaustive evaluation of the whole lattice."""
    n_perf = space.n_perf_points
    if n_perf > 10**6:
        raise ValueError(f"space has {n_perf} perf points; exhaustive search is capped at 1e6")
    real_err = _real_errors(space)  # (C, A)
    cutoffs = np.array(space.cutoffs)
    alphas = np.array(space.alphas)
    real_t = params.a_r + params.b_r * cutoffs**3
    best = None
    for grid in space.grids:
        h = max(d / n for d, n in zip(space.system.dims, grid.shape))
        for order in space.orders:
            recip_err = params.surrogate_ck * alphas * (alphas * h) ** order  # (A,)
            if isinstance(spec, Split):
                ok = (real_err <= spec.real_threshold) & (recip_err[None, :] <= spec.recip_threshold)
            elif isinstance(spec, Combined):
                ok = np.sqrt(real_err**2 + recip_err[None, :] ** 2) <= spec.threshold
            else:
                raise TypeError(spec)
            for c in np.flatnonzero(ok.any(axis=1)):
                total = real_t[c] + _recip_seconds(cutoffs[c], grid, order, params)
                key = (total, grid.points, order, cutoffs[c], grid.shape)
                if best is None or key < best[0]:
                    lo, hi = _widest_run(ok[c])
                    best = (key, c, grid, order, (lo + hi) // 2)
    if best is None:
        raise EmptyAccurateSubspace(f"no accurate configuration for {spec}")
    _, c, grid, order, ai = best
    return Configuration(space.alphas[ai], space.cutoffs[c], order, grid, variant)


def noise_free_total(point, params: SynthParams) -> float:
    """Noise-free total seconds (per 1000 steps) of a (cutoff, grid, order) point."""
    return _real_seconds(point.cutoff, params) + _recip_seconds(point.cutoff, point.grid, point.order, params)
