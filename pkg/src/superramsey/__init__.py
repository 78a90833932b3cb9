"""Mean-field simulator for delayed superradiance and superradiant Ramsey readout."""
from .errors import (ConfigError, FitError, NumericError, SuperRamseyError)
from .fitting import PulseCharacteristics, ScalingFit, fit_gaussian_pulse, fit_scaling
from .integrator import IntegratorConfig, Trajectory, integrate
from .model import (DriveSetting, MeanFieldState, SystemParams, ground_state, rhs,
                    superposition_coefficients)
from .observables import (CollectiveObservables, bloch_vectors, dicke_numbers,
                          effective_atom_number, first_moments, second_moments)
from .protocols import (LockConfig, Protocol, PulseSegment, frequency_lock_run,
                        pi_half_duration, ramsey, run_protocol, spectroscopy_sweep)

__version__ = "0.1.0"
