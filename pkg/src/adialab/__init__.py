"""Numerical laboratory for adiabatic limits of Riemannian foliations."""

__version__ = "0.1.0"

from .models import (Bigrade, FUNCTIONS, FiberedTorusModel, FlatLinearFoliation,
                     Rationality, build_fibered_model, build_flat_model,
                     detect_rationality)
from .operators import (DiscreteOperatorPair, ModeSymbol, assemble_fibered_operators,
                        check_crude_garding, mode_eigenvalue, sobolev_norm_sq)
from .spectra import (CountingFunction, Gaussian, RaisedCosineBump, SmoothedIndicator,
                      SpectrumSample, count_modes, counting_function, enumerate_modes,
                      heat_trace, solve_fibered_spectrum, trace_of_function)
from .leafwise import (LeafwiseDistribution, LeafwiseKind, leafwise_distribution_fibered,
                       leafwise_distribution_flat)
from .adiabatic import (EigenBranch, NEG_INFINITY, SweepReport, estimate_r_exponent,
                        limit_summary, rhs_counting, rhs_heat, rhs_trace_of_function,
                        run_sweep, track_branches)

__all__ = [name for name in dir() if not name.startswith("_")]
