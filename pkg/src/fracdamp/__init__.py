"""Numerical lab for damped fractional Klein-Gordon equations on a periodic grid."""

from .damping import DampingProfile, ThickCertificate, ess_inf, gcc_1d, make_damping, thickness
from .errors import ConfigurationError, ConvergenceError, FracDampError, NumericDomainError
from .evolution import DecayReport, EnergyTrace, fit_decay, simulate, smooth_data, step_strang
from .operators import (absorb_damping_estimate, apply_A, check_resolvent2_chain, free_resolvent_norm_exact,
                        resolvent_sigma_min, resolvent_sweep, w_inverse, w_transform)
from .spectral_core import (SpectralField, StateVector, TorusGrid, apply_multiplier, energy_norm,
                            frac_symbol_value, hs_norm, l2_norm, make_grid, project_annulus, project_ball)
from .uncertainty import envelope_fit, offband_gap, quadform_min_eig, spectral_constant

__version__ = "0.1.0"
