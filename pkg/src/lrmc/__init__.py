"""Low-rank matrix completion on the fixed-rank manifold.

Riemannian gradient and conjugate gradient solvers driven purely by
observed entries, the structured retraction, two initialization
schemes, numerical checkers for the underlying isometry and contraction
bounds, and a seeded experiment harness.
"""

from .errors import (
    ConfigError,
    DegenerateRankError,
    DegenerateStepsizeError,
    InitFailureError,
    LrmcError,
    RankCollapseError,
    RegimeError,
    SvdConvergenceError,
)
from .linalg import (
    LowRankMatrix,
    SpectrumSummary,
    hard_threshold,
    random_lowrank,
    random_lowrank_with_spectrum,
    rel_error,
    spectrum_summary,
    thin_qr,
    truncated_svd,
)
from .sampling import (
    IncoherenceReport,
    ObservedData,
    SamplingSet,
    apply_sampling,
    incoherence_report,
    partition,
    partition_observed,
    sample_with_replacement,
    sample_without_replacement,
)
from .tangent import (
    TangentVector,
    inner,
    project_to_tangent,
    retract,
    sample_tangent,
    transport,
    zero_tangent,
)
from .solvers import SolverOptions, SolverTrace, niht_step, rcg_step, rgrad_step, solve
from .initialization import InitOptions, init_one_step, init_resampled, trim
from .diagnostics import (
    ConvergenceConstants,
    RipEstimate,
    check_projection_bounds,
    check_recursion,
    convergence_constants,
    estimate_asymmetric_rip,
    estimate_local_rip,
    procrustes_align,
)

__version__ = "0.1.0"
