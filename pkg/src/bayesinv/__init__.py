"""Bayesian selection of basis family and order for linear inverse problems.

The forward model is ``y = A x + e`` with ``A = C B``: ``B`` expands a
radial profile in one of six basis families, ``C`` is a quadrature of the
spherical Bessel (j0) transform. Hyperparameters are the noise and
coefficient precisions ``phi`` and ``psi``, with ``lam = psi/phi``.
"""

__version__ = "0.1.0"

from .basis import (  # noqa: E402
    FAMILY_NAMES,
    BasisFamily,
    FrequencyGrid,
    RadialGrid,
    basis_value,
    build_A,
    build_B,
    build_C,
    design_matrices,
)
from .gaussian import (  # noqa: E402
    HyperState,
    NumericalError,
    PosteriorSolution,
    RankDeficientError,
    log_evidence,
    posterior_covariance,
    ridge_solve,
)
from .hyper import (  # noqa: E402
    GammaPrior,
    HyperCriterionContext,
    j2_full,
    j2_lambda,
    j2_reduced,
    optimize_lambda,
    phi_profile,
)
from .scattering import (  # noqa: E402
    FermiModel,
    fermi_density,
    fermi_form_factor,
    normalize_fermi,
    simulate_fermi_dataset,
    simulate_synthetic,
)
from .selection import (  # noqa: E402
    ModelPriors,
    evidence_mc,
    j3,
    j5,
    j6,
    j7,
    joint_map_alg1,
    joint_map_alg2,
    joint_map_select,
    marginal_map_pipeline,
    order_prior,
    phi_from_j5,
)
