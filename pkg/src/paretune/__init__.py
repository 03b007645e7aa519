"""Accuracy-constrained auto-tuning of particle-particle particle-mesh parameters.

Typical flow: build a :class:`SearchSpace`, keep the accurate subspace with
:func:`partition_space`, reduce it to its Pareto frontier, time a few
configurations adaptively, fit cost models and rank the frontier.
"""

from .accuracy import (
    AccurateSubspace,
    Combined,
    ErrorEstimate,
    Frontier,
    PerfPoint,
    Split,
    SurrogateModel,
    TabulatedModel,
    extract_frontier,
    partition_space,
    real_space_error,
    splitting_alpha,
)
from .errors import (
    ConfigError,
    DegenerateFit,
    EmptyAccurateSubspace,
    EmptyGridSet,
    MissingCoverage,
    ParetuneError,
    SamplerFailure,
)
from .kernels import BACKEND
from .modeling import (
    PerfModel,
    Prediction,
    avg_relative_error,
    build_perf_model,
    fit_cubic,
    fit_linear,
    predict,
    rank_frontier,
    segment_series,
)
from .param_space import (
    Configuration,
    GridSize,
    Interfacial,
    ParameterRanges,
    SearchSpace,
    SystemDescription,
    build_search_space,
    enumerate_grid_sizes,
)
from .sampling import (
    AdaptiveParams,
    ExternalCommandSampler,
    Phase,
    RecordingSampler,
    SampleRecord,
    adaptive_sample,
    sample_subspace,
)
from .synth_sim import SynthParams, SyntheticSampler, synth_time, true_optimum

__version__ = "0.1.0"
