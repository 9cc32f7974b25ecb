"""Optimal-transport repair of discrete data under conditional-independence constraints."""
from .cost import CostMatrix, CostSpec, build_cost_matrix
from .dist import (
    CIConstraint,
    Distribution,
    Schema,
    cmi,
    conditional,
    decode,
    empirical_distribution,
    encode,
    kl_divergence,
    marginalize,
)
from .errors import OTCleanError
from .fastotclean import CleanerConfig, CleanerResult, fast_otclean, nmf_init, objective_value
from .ot import ScalingState, SolverParams, TransportPlan, exact_ot_lp, sinkhorn, sinkhorn_relaxed, transport_cost
from .project import FactorPair, project_to_ci, rank1_kl_nmf
from .qclp import QclpProgram, build_qclp, solve_qclp_alternating
from .repair import ProbabilisticCleaner, apply_cleaner, cleaner_from_plan, distortion, rod
from .unsaturated import SplitSchema, build_coupling_greedy, lift_product, repair_unsaturated

__version__ = "0.1.0"
