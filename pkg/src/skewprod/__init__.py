"""skewprod: exact transfer-operator cocycles over mixing Markov bases.

Random skew products with symbolic fibers, instantiated as exact
finite-dimensional operator cocycles; a solver for the random twisted
eigenproblem along base orbits; and configuration-driven verification of the
annealed CLT, Berry-Esseen behaviour, local limit theorem and renewal
theorem, including a Doeblin-kernel Markov-chain variant.
"""

from .base_env import (
    BaseSymbolChain,
    OmegaWindow,
    PeriodicBasePoint,
    audit_mixing,
    build_markov_base,
    periodic_point,
    sample_base_path,
)
from .fiber import (
    CylinderFunction,
    FiberModel,
    PotentialTable,
    extend_depth,
    holder_norm,
    verify_expanding_axioms,
)
from .rpf import (
    RpfTriplet,
    SystemOrbit,
    exp_convergence_probe,
    pressure_curve,
    pressure_derivatives,
    solve_rpf,
)
from .transfer import (
    CocycleProduct,
    TransferMatrix,
    build_transfer,
    compose_cocycle,
    holder_operator_norm,
    lasota_yorke_check,
    normalize_operator,
)

__version__ = "0.1.0"

# statistics and verification layers re-exported for library users
from .doeblin import DoeblinFamily, DoeblinSystem, build_doeblin_family  # noqa: E402
from .gibbs import (  # noqa: E402
    GibbsMeasure,
    LatticeDistribution,
    char_function_spectral,
    exact_Sn_distribution,
    gibbs_measure,
    sample_Sn,
    variance_curve,
)
from .limits import (  # noqa: E402
    SymbolicSystem,
    berry_esseen_scan,
    char_identity,
    clt_test,
    decay_survey,
    lattice_classify,
    llt_scan,
    renewal_curve,
)
