"""Cost-model fitting, piecewise segmentation, prediction and ranking."""

from __future__ import annotations

import bisect
import math
import statistics
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

from .errors import DegenerateFit, LengthMismatch, MissingCoverage, UncoveredOrder

BASES = {
    "cubic": lambda x: x * x * x,
    "linear": lambda x: x,
}


@dataclass(frozen=True)
class CubicFit:
    """``t(c) = a + b * c**3``; ``a`` is fixed overhead."""

    a: float
    b: float
    family = "cubic"

    def __call__(self, c: float) -> float:
        return self.a + self.b * c**3


@dataclass(frozen=True)
class LinearFit:
    """``t(g) = p + b * g``; ``p`` is the particle-to-mesh mapping overhead."""

    p: float
    b: float
    family = "linear"

    def __call__(self, g: float) -> float:
        return self.p + self.b * g


Fit = Union[CubicFit, LinearFit]


def _check_family(family: str) -> None:
    if family not in BASES:
        raise ValueError(f"unknown model family {family!r}; expected one of {sorted(BASES)}")


def _make(family: str, intercept: float, slope: float) -> Fit:
    return CubicFit(intercept, slope) if family == "cubic" else LinearFit(intercept, slope)


def fit_family(points: Iterable[tuple[float, float]], family: str) -> Fit:
    """Least squares over the basis {1, phi(x)} via the 2x2 normal equations (centered form)."""
    _check_family(family)
    pts = sorted((float(x), float(y)) for x, y in points)
    if len(pts) < 2:
        raise DegenerateFit("need at least two points")
    phi = BASES[family]
    u = [phi(x) for x, _ in pts]
    y = [t for _, t in pts]
    n = len(pts)
    u_mean = math.fsum(u) / n
    y_mean = math.fsum(y) / n
    suu = math.fsum((ui - u_mean) ** 2 for ui in u)
    if suu == 0.0:
        raise DegenerateFit(f"all abscissae equal ({pts[0][0]}); cannot fit a {family} model")
    suy = math.fsum((ui - u_mean) * (yi - y_mean) for ui, yi in zip(u, y))
    slope = suy / suu
    intercept = y_mean - slope * u_mean
    if family == "cubic" and slope < 0:
        warnings.warn(f"cubic fit has negative slope b={slope:.3g}", RuntimeWarning, stacklevel=2)
    return _make(family, intercept, slope)


def fit_cubic(points: Iterable[tuple[float, float]]) -> CubicFit:
    return fit_family(points, "cubic")


def fit_linear(points: Iterable[tuple[float, float]]) -> LinearFit:
    return fit_family(points, "linear")


def _fit_or_constant(family: str, pts: Sequence[tuple[float, float]]) -> Fit:
    if len({x for x, _ in pts}) < 2:
        return _make(family, statistics.fmean(y for _, y in pts), 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_family(pts, family)


def fit_error(fit: Fit, points: Iterable[tuple[float, float]]) -> float:
    """Average relative error ``mean(|f(x) - t| / t)`` over measured points."""
    errs = [abs(fit(x) - y) / y for x, y in points]
    return math.fsum(errs) / len(errs)


def local_fit_error(family: str, xs: Sequence[float], ys: Sequence[float]) -> float:
    """Worst relative residual after fitting ``family`` to a handful of points."""
    pts = list(zip(xs, ys))
    fit = _fit_or_constant(family, pts)
    return max(abs(fit(x) - y) / y for x, y in pts)


def _rel_sse(fit: Fit, pts: Sequence[tuple[float, float]]) -> float:
    return math.fsum(((fit(x) - y) / y) ** 2 for x, y in pts)


@dataclass(frozen=True)
class PiecewiseModel:
    """Contiguous segments; segment ``k`` serves ``breakpoints[k-1] <= x < breakpoints[k]``."""

    breakpoints: tuple[float, ...]
    segments: tuple[Fit, ...]
    x_min: float
    x_max: float

    def __post_init__(self):
        if len(self.segments) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more segment than breakpoints")

    def segment_for(self, x: float) -> Fit:
        return self.segments[bisect.bisect_right(self.breakpoints, x)]

    def __call__(self, x: float) -> float:
        return self.segment_for(x)(x)

    def covers(self, x: float) -> bool:
        return self.x_min <= x <= self.x_max

    @classmethod
    def single(cls, fit: Fit, x_min: float, x_max: float) -> "PiecewiseModel":
        return cls((), (fit,), x_min, x_max)


def segment_series(points: Iterable[tuple[float, float]], family: str, max_avg_rel_err: float = 0.05) -> PiecewiseModel:
    """Top-down segmentation into pieces of ``family``.

    A segment is accepted when its average relative error is within
    ``max_avg_rel_err`` or it has two points or fewer; otherwise it is cut
    where the summed relative squared error of the two halves is smallest
    (earliest cut on ties). Cuts never separate points with equal abscissa.
    """
    _check_family(family)
    pts = sorted((float(x), float(y)) for x, y in points)
    if len(pts) < 2:
        raise DegenerateFit("segment_series needs at least two points")

    pieces: list[tuple[list, Fit]] = []

    def rec(seg):
        fit = _fit_or_constant(family, seg)
        if len(seg) <= 2 or fit_error(fit, seg) <= max_avg_rel_err:
            pieces.append((seg, fit))
            return
        best = None
        for k in range(1, len(seg)):
            if seg[k - 1][0] == seg[k][0]:
                continue
            left, right = seg[:k], seg[k:]
            cost = _rel_sse(_fit_or_constant(family, left), left) + _rel_sse(_fit_or_constant(family, right), right)
            if best is None or cost < best[0]:
                best = (cost, k)
        if best is None:  # every point shares one abscissa
            pieces.append((seg, fit))
            return
        rec(seg[: best[1]])
        rec(seg[best[1]:])

    rec(pts)
    return PiecewiseModel(
        breakpoints=tuple(seg[0][0] for seg, _ in pieces[1:]),
        segments=tuple(f for _, f in pieces),
        x_min=pts[0][0],
        x_max=pts[-1][0],
    )


@dataclass(frozen=True)
class RecipLevels:
    """Reciprocal-time models for one order at the low and high cutoff levels."""

    rc_lo: float
    model_lo: PiecewiseModel
    rc_hi: float
    model_hi: PiecewiseModel

    def __call__(self, cutoff: float, g: float) -> float:
        if self.rc_hi == self.rc_lo:
            return self.model_lo(g)
        c = min(max(cutoff, self.rc_lo), self.rc_hi)
        t = (c - self.rc_lo) / (self.rc_hi - self.rc_lo)
        return (1.0 - t) * self.model_lo(g) + t * self.model_hi(g)

    def covers(self, g: float) -> bool:
        return self.model_lo.covers(g) and self.model_hi.covers(g)


@dataclass(frozen=True)
class PerfModel:
    real_model: PiecewiseModel
    recip_models: Mapping[int, RecipLevels]
    n_procs: int = 1

    @property
    def rc_min(self) -> float:
        return min(lv.rc_lo for lv in self.recip_models.values())

    @property
    def rc_max(self) -> float:
        return max(lv.rc_hi for lv in self.recip_models.values())


def predict_detail(point, model: PerfModel) -> tuple[float, bool]:
    """Predicted seconds for a (cutoff, grid, order) point, and whether it extrapolates."""
    cutoff, grid, order = _unpack(point)
    try:
        levels = model.recip_models[order]
    except KeyError:
        raise UncoveredOrder(f"no reciprocal model for interpolation order {order}")
    g = grid.points
    seconds = model.real_model(cutoff) + levels(cutoff, g)
    extrapolated = not (model.real_model.covers(cutoff) and levels.covers(g))
    return seconds, extrapolated


def predict(point, model: PerfModel) -> float:
    return predict_detail(point, model)[0]


def _unpack(point):
    if isinstance(point, tuple):
        return point
    return point.cutoff, point.grid, point.order


@dataclass(frozen=True)
class Prediction:
    point: object  # accuracy.PerfPoint
    est_seconds: float
    extrapolated: bool = False

    @property
    def chosen_alpha(self) -> float:
        return self.point.chosen_alpha

    @property
    def alpha_interval(self) -> tuple[float, float]:
        return (self.point.alpha_lo, self.point.alpha_hi)

    @property
    def rank_key(self) -> tuple:
        p = self.point
        return (self.est_seconds, p.grid.points, p.order, p.cutoff, p.grid.shape)


def rank_frontier(frontier, model: PerfModel) -> list[Prediction]:
    """Frontier points by ascending predicted time; ties favor fewer grid points, lower order, smaller cutoff."""
    preds = []
    for p in frontier:
        seconds, extra = predict_detail(p, model)
        preds.append(Prediction(p, seconds, extra))
    return sorted(preds, key=lambda pr: pr.rank_key)


def avg_relative_error(predictions: Sequence[float], empirical: Sequence[float]) -> float:
    """``mean(|t_pred - t_emp| / t_pred)``."""
    if len(predictions) != len(empirical):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(empirical)} measurements")
    if not predictions:
        raise LengthMismatch("need at least one prediction")
    return math.fsum(abs(p - e) / p for p, e in zip(predictions, empirical)) / len(predictions)


def build_perf_model(records, max_avg_rel_err: float = 0.05, n_procs: int = 1) -> PerfModel:
    """Fit the real-space and per-order reciprocal models from timing records.

    Repeated measurements of one configuration are reduced to their median.
    Reciprocal records of each order use their smallest and largest cutoff as
    the two interpolation levels.
    """
    from .sampling import Phase

    real: dict[float, list[float]] = defaultdict(list)
    recip: dict[int, dict[float, dict]] = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    for r in records:
        phase = Phase(r.phase)
        if phase is Phase.REAL:
            real[r.config.cutoff].append(r.seconds)
        elif phase is Phase.RECIP:
            recip[r.config.order][r.config.cutoff][r.config.grid].append(r.seconds)
    if not real:
        raise MissingCoverage("no real-space samples")

    real_pts = [(c, statistics.median(ts)) for c, ts in sorted(real.items())]
    real_model = _series_model(real_pts, "cubic", max_avg_rel_err)

    levels = {}
    for order, by_cut in sorted(recip.items()):
        rc_lo, rc_hi = min(by_cut), max(by_cut)
        models = []
        for rc in (rc_lo, rc_hi):
            pts = [(g.points, statistics.median(ts)) for g, ts in sorted(by_cut[rc].items())]
            models.append(_series_model(pts, "linear", max_avg_rel_err))
        levels[order] = RecipLevels(rc_lo, models[0], rc_hi, models[1])
    return PerfModel(real_model, levels, n_procs)


def _series_model(pts, family, max_avg_rel_err) -> PiecewiseModel:
    if len(pts) == 1:
        x, y = pts[0]
        return PiecewiseModel.single(_make(family, y, 0.0), x, x)
    return segment_series(pts, family, max_avg_rel_err)


def require_coverage(frontier, model: PerfModel) -> None:
    missing = sorted({p.order for p in frontier} - set(model.recip_models))
    if missing:
        raise MissingCoverage(f"no reciprocal-space samples for frontier order(s) {missing}")
