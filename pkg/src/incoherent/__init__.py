"""Incoherent learning of quantum processes from classical shadows.

Simulates the measurement phase (Pauli or Clifford shadows of a target's
outputs on product inputs), trains a parameterized circuit on shadow-estimated
compilation costs, and checks the product-measurement hardness constants.
"""

from .costs import (
    CostReport,
    backpropagate_site_observable,
    global_cost_exact,
    global_cost_from_shadows,
    hst_cost,
    local_cost_exact,
    local_cost_from_shadows,
    test_loss,
)
from .errors import (
    IncoherentError,
    IntegrityError,
    NumericError,
    ResourceError,
    ValidationError,
)
from .hardness import (
    DistinguishRecord,
    Strategy,
    clever_distinguisher,
    run_distinguishing_experiment,
    single_measurement_tv,
    stabilizer_constant,
    twirl_moments,
)
from .locality import (
    LocalityProfile,
    PauliDecomposition,
    locality_profile,
    pauli_decompose,
    tail_norm,
)
from .shadow_io import read_shadow, write_shadow
from .shadows import (
    ShadowSet,
    SupportOperator,
    estimate_fidelity_clifford,
    estimate_support_expectation,
    median_of_means,
    sample_clifford_shadow,
    sample_pauli_shadow,
)
from .sim import (
    Circuit,
    Gate,
    GhzLike,
    ProductState,
    StateVector,
    apply_circuit,
    apply_ghz_like,
    build_trotter_heisenberg,
    build_trotter_tfim,
    dense_unitary,
    make_product_state,
    overlap,
    sample_haar_product,
    sample_stabilizer_product,
)
from .trainer import (
    TargetHandle,
    TrainConfig,
    TrainTrace,
    collect_shadows,
    covering_search,
    gradient,
    minimize,
    train_incoherent,
)

__version__ = "0.1.0"
