"""Observer-valued selective structures on finite carriers.

Observers, their topologies, charts and mu-structures, products, level-wise
differentiability of maps, level tangent spaces and differentials, and the
eigenvalue-count observer at hyperbolic fixed points.
"""

__version__ = "0.1.0"

from .atlas import (
    Chart,
    CompatibilityWitness,
    MuStructure,
    SelectiveManifold,
    check_chart,
    structure_leq,
    structures_equivalent,
    validate_b1,
    validate_b2_pair,
    validate_selective,
    validate_structure,
)
from .differentiable import (
    SelectiveMap,
    check_c2,
    check_c3,
    check_c4,
    check_continuity,
    compose,
    compute_k_f_alpha,
    is_alpha_smooth,
    is_r_alpha_diffeomorphism,
    is_r_alpha_differentiable,
    preimage_chart,
    smooth_iff_composed,
)
from .exceptions import InputError, NumericError, ObsManifoldError, ParseError
from .expr import VecMap, parse_sexpr, to_sexpr
from .hyperbolic import DynamicalPoint, build_example_structure, example_chart, observer_value, sigma_delta
from .instance import build_instance, format_instance, parse_instance
from .kernel import eigenvalues, jacobian, jacobian_fd, jacobian_symbolic, smoothness_probe
from .observer import Carrier, ConstantObserver, Observer, image, inf_intersection, sup_union, zero_observer
from .product import n_fold_product, product_chart, product_observer, product_structure, product_witness
from .report import AxiomReport
from .suite import ValidationReport, run_suite
from .tangent import (
    MultiPath,
    TangentVector,
    alpha_differential,
    partition_charts,
    path_velocity,
    paths_equivalent,
    tangent_bijection,
    tv_add,
    tv_scale,
)
from .tolerance import TolerancePolicy, default_policy
from .topology import MuTopology, build_K, generate_level_topology, generate_mu_topology, level_preimage, validate_mu_axioms
