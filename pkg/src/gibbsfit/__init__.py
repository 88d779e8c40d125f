"""Maximum-entropy and generalized Gibbs state estimation from tomographic data,
asymptotic likelihoods, and selection of relevant observables."""

from .gibbs import (
    FitReport,
    GibbsFitError,
    GibbsModel,
    InfeasibleTargets,
    NonConvergence,
    dual_gradient,
    dual_objective,
    fit_gibbs,
    gibbs_state,
    kubo_mori_hessian,
    log_partition,
    pythagoras_residual,
)
from .likelihood import (
    SampleMeans,
    combine_images,
    is_compatible,
    sanov_log_likelihood,
    sanov_state,
    stein_log_likelihood,
)
from .operators import (
    DensityMatrix,
    HermitianOperator,
    ObservableSet,
    expectation,
    hermitian_function,
    pauli,
    pauli_basis,
    random_density_matrix,
    random_hermitian,
    random_unitary,
    relative_entropy,
    von_neumann_entropy,
)
from .selection import (
    HypothesisScore,
    InfiniteDivergence,
    RankedHypothesis,
    RelevanceHypothesis,
    enumerate_hypotheses,
    project_to_hypothesis,
    rank_hypotheses,
    score_hypothesis,
)
from .tomography import (
    EnsembleSpec,
    GridPosterior,
    Reconstruction,
    SampleRecord,
    bloch_prior,
    generate_ensemble,
    qubit_posterior,
    qubit_sanov_log_likelihood,
    reconstruct_image,
    simulate_sample,
    trace_distance,
    update_posterior,
)

__version__ = "0.1.0"
