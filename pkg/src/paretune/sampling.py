"""Sampling plans, samplers, and recursive adaptive sampling."""

from __future__ import annotations

import logging
import math
import re
import shlex
import statistics
import string
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Hashable, Iterable, Optional, Protocol, Sequence

from .errors import ConfigError, NonPositiveTime, ParseError, SamplerFailure, SpawnError
from .modeling import local_fit_error
from .param_space import UNIT_GRID, Configuration, GridSize, SearchSpace, lattice

log = logging.getLogger(__name__)

# alpha does not change run time; any lattice value works for timing runs
SAMPLING_ALPHA = 0.50
STATIC_REAL_STEP = 0.5


class Phase(str, Enum):
    REAL = "real"
    RECIP = "recip"
    TOTAL = "total"


class Sampler(Protocol):
    concurrent_safe: bool

    def measure(self, config: Configuration, phase: Phase, timesteps: int) -> float:
        ...


@dataclass(frozen=True)
class SampleRecord:
    config: Configuration
    phase: Phase
    seconds: float
    repeat_index: int = 0

    def __post_init__(self):
        if not self.seconds > 0:
            raise NonPositiveTime(f"non-positive sample time {self.seconds}", position=self.config)


@dataclass(frozen=True)
class AdaptiveParams:
    rel_error_threshold: float = 0.05
    max_depth: int = 8
    repeats_per_point: int = 1

    def __post_init__(self):
        if not self.rel_error_threshold > 0:
            raise ConfigError("rel_error_threshold must be > 0")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.repeats_per_point < 1:
            raise ConfigError("repeats_per_point must be >= 1")


def static_real_plan(space: SearchSpace, variant: str = "ik") -> list[Configuration]:
    """Real-space timing runs: cutoffs every 0.5 from cutoff_min, on a 1x1x1 order-2 mesh."""
    r = space.ranges
    return [
        Configuration(SAMPLING_ALPHA, c, 2, UNIT_GRID, variant)
        for c in lattice(r.cutoff_min, r.cutoff_max, STATIC_REAL_STEP)
    ]


def static_recip_plan(space: SearchSpace, orders: Optional[Iterable[int]] = None, variant: str = "ik") -> list[Configuration]:
    """Every (order, grid) pair at the minimum cutoff."""
    keep = set(space.orders if orders is None else orders)
    cutoff = space.cutoffs[0]
    return [
        Configuration(SAMPLING_ALPHA, cutoff, p, g, variant)
        for p in space.orders
        if p in keep
        for g in space.grids
    ]


def adaptive_sample(
    xs: Sequence[Hashable],
    family: str,
    params: AdaptiveParams,
    measure_at: Callable[[Hashable], float],
    coord: Callable[[Hashable], float] = float,
) -> dict:
    """Sample ``xs`` recursively, refining only where the family fits poorly.

    Endpoints are always measured. On each range ``[i, j]`` the midpoint is
    measured and the family is fitted to the three points; if any of them is
    off by more than the threshold (relative), both halves are refined.
    ``coord`` maps a position to the abscissa used for fitting. Each position
    is measured at most once (``repeats_per_point`` times, median kept).
    """
    n = len(xs)
    if n < 2:
        raise ValueError("adaptive_sample needs at least two positions")
    timings: dict[int, float] = {}
    xcoord = [coord(x) for x in xs]

    def sample(i: int) -> float:
        if i not in timings:
            try:
                raw = [measure_at(xs[i]) for _ in range(params.repeats_per_point)]
            except SamplerFailure as exc:
                if exc.position is None:
                    exc.position = xs[i]
                raise
            timings[i] = statistics.median(raw)
        return timings[i]

    def rec(i: int, j: int, depth: int) -> None:
        if j - i <= 1:
            return
        mid = (i + j) // 2
        sample(mid)
        err = local_fit_error(
            family,
            [xcoord[i], xcoord[mid], xcoord[j]],
            [timings[i], timings[mid], timings[j]],
        )
        if err > params.rel_error_threshold and depth < params.max_depth:
            rec(i, mid, depth + 1)
            rec(mid, j, depth + 1)

    sample(0)
    sample(n - 1)
    rec(0, n - 1, 1)
    return {xs[i]: timings[i] for i in sorted(timings)}


@dataclass(frozen=True)
class RecipPass:
    """One adaptive sweep over grids for a fixed order and cutoff level."""

    order: int
    cutoff: float
    grids: tuple[GridSize, ...]


def dynamic_real_plan(sub) -> list[float]:
    """Cutoff lattice positions spanning the accurate subspace."""
    lo, hi = sub.cutoff_range
    return [c for c in sub.space.cutoffs if lo <= c <= hi]


def dynamic_recip_plan(sub) -> list[RecipPass]:
    """Passes at the min and max accurate cutoff for every accurate order, over its accurate grid range."""
    rc_lo, rc_hi = sub.cutoff_range
    levels = [rc_lo] if rc_lo == rc_hi else [rc_lo, rc_hi]
    passes = []
    for order in sub.accurate_orders:
        g_lo, g_hi = sub.grid_range(order)
        grids = tuple(g for g in sub.space.grids if g_lo <= g <= g_hi)
        passes.extend(RecipPass(order, rc, grids) for rc in levels)
    return passes


class RecordingSampler:
    """Wraps a sampler, keeping every measurement as a :class:`SampleRecord`."""

    def __init__(self, sampler: Sampler):
        self.sampler = sampler
        self.records: list[SampleRecord] = []
        self._repeats: dict[tuple, int] = {}
        self._lock = threading.Lock()

    @property
    def concurrent_safe(self) -> bool:
        return getattr(self.sampler, "concurrent_safe", False)

    @property
    def calls(self) -> int:
        return len(self.records)

    def measure(self, config: Configuration, phase: Phase, timesteps: int) -> float:
        seconds = self.sampler.measure(config, phase, timesteps)
        if not (isinstance(seconds, (int, float)) and math.isfinite(seconds) and seconds > 0):
            raise NonPositiveTime(f"sampler returned {seconds!r} s", position=config)
        with self._lock:
            rep = self._repeats.get((config, phase), 0)
            self._repeats[(config, phase)] = rep + 1
            self.records.append(SampleRecord(config, phase, float(seconds), rep))
        return seconds


def sample_subspace(sub, sampler: RecordingSampler, params: AdaptiveParams, timesteps: int, jobs: int = 1) -> None:
    """Run the adaptive real-space sweep and all reciprocal passes; results land in ``sampler.records``.

    With ``jobs > 1`` and a concurrency-safe sampler the sweeps run in
    parallel; record order then varies but the set of records does not.
    """
    variant = sub.variant
    cutoffs = dynamic_real_plan(sub)

    def real_sweep():
        real_at = lambda c: sampler.measure(Configuration(SAMPLING_ALPHA, c, 2, UNIT_GRID, variant), Phase.REAL, timesteps)
        if len(cutoffs) == 1:
            for _ in range(params.repeats_per_point):
                real_at(cutoffs[0])
        else:
            adaptive_sample(cutoffs, "cubic", params, real_at)

    def recip_sweep(rp: RecipPass):
        def recip_at(g):
            return sampler.measure(Configuration(SAMPLING_ALPHA, rp.cutoff, rp.order, g, variant), Phase.RECIP, timesteps)

        if len(rp.grids) == 1:
            for _ in range(params.repeats_per_point):
                recip_at(rp.grids[0])
        else:
            adaptive_sample(rp.grids, "linear", params, recip_at, coord=lambda g: g.points)
        log.debug("order %d at cutoff %g done", rp.order, rp.cutoff)

    tasks = [real_sweep] + [lambda rp=rp: recip_sweep(rp) for rp in dynamic_recip_plan(sub)]
    if jobs > 1 and sampler.concurrent_safe:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for fut in [pool.submit(t) for t in tasks]:
                fut.result()
    else:
        for t in tasks:
            t()


PLACEHOLDERS = frozenset({"alpha", "cutoff", "order", "nx", "ny", "nz", "timesteps", "phase"})


class ExternalCommandSampler:
    """Times a configuration by running a shell command and parsing seconds from its stdout.

    ``template`` is a ``str.format`` string over :data:`PLACEHOLDERS`;
    ``parser`` is a regex with one capture group holding the seconds.
    """

    concurrent_safe = True

    def __init__(self, template: str, parser: str = r"([0-9.eE+-]+)", timeout: float = 600.0):
        names = {f for _, f, _, _ in string.Formatter().parse(template) if f}
        unknown = names - PLACEHOLDERS
        if unknown:
            raise ConfigError(f"unknown placeholders in command template: {sorted(unknown)}")
        self.template = template
        self.parser = re.compile(parser)
        if self.parser.groups != 1:
            raise ConfigError("timing regex must have exactly one capture group")
        self.timeout = timeout

    def command(self, config: Configuration, phase: Phase, timesteps: int) -> str:
        g = config.grid
        return self.template.format(
            alpha=config.alpha,
            cutoff=config.cutoff,
            order=config.order,
            nx=g.nx,
            ny=g.ny,
            nz=g.nz,
            timesteps=timesteps,
            phase=Phase(phase).value,
        )

    def measure(self, config: Configuration, phase: Phase, timesteps: int) -> float:
        cmd = self.command(config, phase, timesteps)
        try:
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired:
            raise SpawnError(f"command timed out after {self.timeout} s: {cmd}", position=config)
        except OSError as exc:
            raise SpawnError(f"could not run {shlex.quote(cmd)}: {exc}", position=config)
        if proc.returncode != 0:
            raise SpawnError(
                f"command exited with status {proc.returncode}: {cmd}\n{proc.stderr.strip()}", position=config
            )
        m = self.parser.search(proc.stdout)
        if m is None:
            raise ParseError(f"no timing matching {self.parser.pattern!r} in output of {cmd}", position=config)
        try:
            seconds = float(m.group(1))
        except ValueError:
            raise ParseError(f"captured {m.group(1)!r} is not a number", position=config)
        if not (math.isfinite(seconds) and seconds > 0):
            raise NonPositiveTime(f"command reported {seconds} s", position=config)
        return seconds


def external_command_sampler(template: str, parser: str = r"([0-9.eE+-]+)", timeout: float = 600.0) -> ExternalCommandSampler:
    return ExternalCommandSampler(template, parser, timeout)
