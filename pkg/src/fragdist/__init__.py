"""Fragility distributions of exceedance counts and conditional Stein approximations."""

from .dist_core import (
    ClusterDistribution,
    CompoundPoissonParams,
    NegBinParams,
    PmfVector,
    conditional_cp_pmf,
    conditional_nb_pmf,
    conditional_poisson_pmf,
    conditional_truncate,
    convolve,
    convolve_power,
    cp_pmf,
    nb_pmf,
    poisson_pmf,
    restarted_cp_pmf,
)
from .errors import FragdistError
from .fragility import FragilityResult, fd_convergence_table, fd_limit, index_I_m
from .metrics import TvReport, empirical_pmf, tv_distance
from .models import (
    IndependentExceedanceModel,
    TwoRunsModel,
    ZeroInflatedModel,
    sample,
    verify_bound,
)
from .stein import SteinFactors, monotonicity_sweep, stein_factors

__version__ = "0.1.0"
