"""Curie-Weiss Metropolis-Hastings dynamics at low temperature.

Exact lumped laws of the magnetization, the birth-death kernel of the
single-spin-flip chain, concentration checks, stochastic engines and
diagnostics of the Ornstein-Uhlenbeck scaling limit.
"""

__version__ = "0.1.0"

from .exceptions import CWError, DomainError, PhaseError, ResourceError, SearchError
from .model_core import (
    CwRoots,
    ExactMagnetizationDistribution,
    ModelParams,
    Phase,
    SpinState,
    eta_statistics,
    exact_distribution,
    hamiltonian,
    rate_function,
    solve_cw_roots,
)
from .lumped_kernel import LumpedKernel, build_kernel, generator_apply, local_moments, phi, proposal_prob
from .concentration import chatterjee_bound, check_slope, exact_lhs_tail, find_interval, tail_decay
from .diagnostics import (
    OUParams,
    asymptotic_moment_oracle,
    autocov_compare,
    convergence_report,
    generator_discrepancy,
    ks_distance,
    ou_params,
)
from .simulate import RngSpec, mh_step, ou_step, run_ctmc, run_lumped_chain, run_ou, run_spin_chain
