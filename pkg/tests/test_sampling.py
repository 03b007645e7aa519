import statistics
import sys

import pytest
from hypothesis import given, strategies as st

from paretune.accuracy import Split, SurrogateModel, partition_space
from paretune.errors import ConfigError, NonPositiveTime, ParseError, SamplerFailure, SpawnError
from paretune.param_space import Configuration, GridSize, ParameterRanges, SystemDescription, build_search_space
from paretune.sampling import (
    AdaptiveParams,
    ExternalCommandSampler,
    Phase,
    RecordingSampler,
    SampleRecord,
    adaptive_sample,
    dynamic_real_plan,
    dynamic_recip_plan,
    sample_subspace,
    static_real_plan,
    static_recip_plan,
)
from paretune.synth_sim import SynthParams, SyntheticSampler

CUTOFFS9 = [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0]


class Counter:
    def __init__(self, fn):
        self.fn = fn
        self.calls = []

    def __call__(self, x):
        self.calls.append(x)
        return self.fn(x)


def test_static_real_plan_default(sb_system):
    plan = static_real_plan(build_search_space(sb_system))
    assert [c.cutoff for c in plan] == CUTOFFS9
    assert all(c.alpha == 0.5 and c.order == 2 and c.grid.shape == (1, 1, 1) for c in plan)


@pytest.mark.parametrize("lo,hi,n", [(2.0, 2.0, 1), (3.0, 6.0, 7)])
def test_static_real_plan_clipped(sb_system, lo, hi, n):
    plan = static_real_plan(build_search_space(sb_system, ParameterRanges(cutoff_min=lo, cutoff_max=hi)))
    assert len(plan) == n
    assert plan[0].cutoff == lo and plan[-1].cutoff == hi


def test_static_recip_plan_counts(si_system):
    space = build_search_space(si_system)
    plan = static_recip_plan(space)
    assert len(plan) == len(space.orders) * len(space.grids)
    assert all(c.cutoff == 2.0 and c.alpha == 0.5 for c in plan)
    assert len(static_recip_plan(space, orders=[4, 5])) == 2 * len(space.grids)
    assert {c.order for c in static_recip_plan(space, orders=[4, 5])} == {4, 5}


def test_static_recip_plan_ninety(si_system):
    # five orders over eighteen grids
    space = build_search_space(si_system)
    space18 = type(space)(space.system, space.ranges, space.alphas, space.cutoffs, space.grids[:18], space.orders)
    assert len(static_recip_plan(space18)) == 90
    one = type(space)(space.system, space.ranges, space.alphas, space.cutoffs, space.grids[:1], (3,))
    assert len(static_recip_plan(one)) == 1


def test_adaptive_exact_cubic_needs_three():
    f = Counter(lambda c: 0.44 + 0.0565 * c**3)
    out = adaptive_sample(CUTOFFS9, "cubic", AdaptiveParams(), f)
    assert sorted(out) == [2.0, 4.0, 6.0]
    assert len(f.calls) == 3


def test_adaptive_two_positions():
    f = Counter(lambda c: c)
    out = adaptive_sample([1.0, 2.0], "linear", AdaptiveParams(), f)
    assert sorted(out) == [1.0, 2.0] and len(f.calls) == 2


def test_adaptive_shifted_lines_refines_near_break():
    xs = [float(g) for g in range(1000, 18000, 1000)]  # 17 positions
    brk = 9500.0

    f = Counter(lambda g: 1.0 + 1e-4 * g + (1.5 if g >= brk else 0.0))
    out = adaptive_sample(xs, "linear", AdaptiveParams(0.05), f)
    assert 3 < len(f.calls) < len(xs)
    assert 9000.0 in out and 10000.0 in out  # both sides of the jump are pinned down
    assert len(set(f.calls)) == len(f.calls)


def test_adaptive_max_depth_limits_recursion():
    xs = list(range(1, 65))
    f = Counter(lambda x: 1.0 + (x % 2) * 5)  # hostile zigzag
    adaptive_sample([float(x) for x in xs], "linear", AdaptiveParams(0.01, max_depth=1), f)
    assert len(f.calls) == 3


def test_adaptive_repeats_median():
    seq = iter([5.0, 1.0, 3.0, 2.0, 2.0, 9.0, 7.0, 7.0, 1.0])
    out = adaptive_sample([1.0, 2.0, 3.0], "linear", AdaptiveParams(10.0, repeats_per_point=3), lambda x: next(seq))
    assert out == {1.0: 3.0, 3.0: 2.0, 2.0: 7.0}


def test_adaptive_failure_carries_position():
    def boom(x):
        if x == 4.0:
            raise SpawnError("nope")
        return 1.0 + x

    with pytest.raises(SamplerFailure) as err:
        adaptive_sample([2.0, 3.0, 4.0, 5.0, 6.0], "linear", AdaptiveParams(), boom)
    assert err.value.position == 4.0


@given(
    st.lists(st.floats(0.1, 100.0), min_size=2, max_size=40),
    st.floats(0.001, 0.5),
    st.integers(1, 8),
)
def test_adaptive_invariants(ys, thr, depth):
    xs = [float(i) for i in range(len(ys))]
    f = Counter(lambda x: ys[int(x)])
    out = adaptive_sample(xs, "linear", AdaptiveParams(thr, max_depth=depth), f)
    assert set(out) <= set(xs)
    assert xs[0] in out and xs[-1] in out
    assert len(f.calls) == len(set(f.calls)) <= len(xs)


@given(st.floats(0.01, 10.0), st.floats(0.0, 1.0), st.integers(3, 40))
def test_adaptive_exact_family_three_points(a, b, n):
    xs = [2.0 + 4.0 * i / (n - 1) for i in range(n)]
    f = Counter(lambda c: a + b * c**3)
    adaptive_sample(xs, "cubic", AdaptiveParams(), f)
    assert len(f.calls) == 3


def _subspace(system, spec=Split(1e-3, 1e-1), ck=0.01):
    space = build_search_space(system)
    return partition_space(space, spec, SurrogateModel(ck))


def test_dynamic_plans_follow_subspace(sb_system):
    sub = _subspace(sb_system, Split(1e-3, 1e-3))
    lo, hi = sub.cutoff_range
    assert dynamic_real_plan(sub)[0] == lo and dynamic_real_plan(sub)[-1] == hi
    passes = dynamic_recip_plan(sub)
    assert {p.order for p in passes} == set(sub.accurate_orders)
    assert {p.cutoff for p in passes} == {lo, hi}
    for p in passes:
        g_lo, g_hi = sub.grid_range(p.order)
        assert p.grids[0] == g_lo and p.grids[-1] == g_hi


def test_dynamic_recip_single_level_when_one_cutoff(sb_system):
    space = build_search_space(sb_system, ParameterRanges(cutoff_min=4.0, cutoff_max=4.0))
    sub = partition_space(space, Split(1e-3, 1e-1), SurrogateModel(0.01))
    passes = dynamic_recip_plan(sub)
    assert len(passes) == len(sub.accurate_orders)
    assert {p.cutoff for p in passes} == {4.0}


def test_dynamic_recip_skips_inaccurate_orders(sb_system):
    # a tight reciprocal threshold rules out the low orders
    sub = _subspace(sb_system, Split(1e-3, 1e-4), ck=100.0)
    assert 2 not in sub.accurate_orders
    assert {p.order for p in dynamic_recip_plan(sub)} == set(sub.accurate_orders)


def test_sample_subspace_records_and_jobs_equivalence(sb_system):
    sub = _subspace(sb_system)
    params = SynthParams(noise_frac=0.02, rng_seed=4, surrogate_ck=0.01)
    recs = []
    for jobs in (1, 6):
        rec = RecordingSampler(SyntheticSampler(params))
        sample_subspace(sub, rec, AdaptiveParams(), 1000, jobs=jobs)
        recs.append(sorted((r.phase.value, r.config.cutoff, r.config.order, r.config.grid.sort_key, r.seconds) for r in rec.records))
        assert rec.calls == len(rec.records)
    assert recs[0] == recs[1]


def test_recording_sampler_rejects_bad_times():
    class Bad:
        concurrent_safe = False

        def measure(self, config, phase, timesteps):
            return -1.0

    cfg = Configuration(0.5, 3.0, 2, GridSize(1, 1, 1))
    with pytest.raises(NonPositiveTime):
        RecordingSampler(Bad()).measure(cfg, Phase.REAL, 1000)
    with pytest.raises(NonPositiveTime):
        SampleRecord(cfg, Phase.REAL, 0.0)


def test_adaptive_params_validation():
    for kwargs in (dict(rel_error_threshold=0.0), dict(max_depth=0), dict(repeats_per_point=0)):
        with pytest.raises(ConfigError):
            AdaptiveParams(**kwargs)


CFG = Configuration(0.5, 3.0, 4, GridSize(8, 8, 48))


def test_external_echo():
    s = ExternalCommandSampler("echo 3.14", r"([0-9.]+)")
    assert s.measure(CFG, Phase.TOTAL, 1000) == 3.14


def test_external_placeholders_substituted():
    s = ExternalCommandSampler(
        f"{sys.executable} -c \"print('order={{order}} grid={{nx}}x{{ny}}x{{nz}} t=' + str({{timesteps}}/1000 * {{cutoff}}))\"",
        r"t=([0-9.eE+-]+)",
    )
    assert s.command(CFG, Phase.RECIP, 2000).count("8x8x48") == 1
    assert s.measure(CFG, Phase.RECIP, 2000) == 6.0


def test_external_nonzero_exit():
    with pytest.raises(SpawnError):
        ExternalCommandSampler("echo 1.0; exit 3").measure(CFG, Phase.TOTAL, 1000)


def test_external_no_number():
    with pytest.raises(ParseError):
        ExternalCommandSampler("echo hello", r"([0-9.]+)").measure(CFG, Phase.TOTAL, 1000)


def test_external_non_numeric_capture():
    with pytest.raises(ParseError):
        ExternalCommandSampler("echo t=..", r"t=([0-9.]+)").measure(CFG, Phase.TOTAL, 1000)


def test_external_zero_time():
    with pytest.raises(NonPositiveTime):
        ExternalCommandSampler("echo 0.0").measure(CFG, Phase.TOTAL, 1000)


def test_external_timeout():
    with pytest.raises(SpawnError):
        ExternalCommandSampler("sleep 5; echo 1", timeout=0.2).measure(CFG, Phase.TOTAL, 1000)


def test_external_template_validation():
    with pytest.raises(ConfigError):
        ExternalCommandSampler("run --mesh {mesh}")
    with pytest.raises(ConfigError):
        ExternalCommandSampler("echo 1", r"[0-9]+")
