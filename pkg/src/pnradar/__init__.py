"""OFDM radar delay-Doppler estimation under oscillator phase noise."""
from .errors import (CholeskyFailure, InconsistentNumerology, NotConverged, PnRadarError,
                     PrincipalOutOfRange, TooLarge)
from .frame import (SPEED_OF_LIGHT, FrameConfig, NoiseModel, OscillatorModel, Scenario, Target,
                    make_frame, noise_from_snr, reference_frame, target_params)
from .pn_model import (TbtCovariance, build_covariance, dpn_correlation, dpn_variance,
                       materialize_dense, sample_pn, tbt_matvec)
from .linalg import cg_solve
from .ofdm import (Observation, delay_steering, doppler_steering, generate_symbols, q_vector,
                   synthesize)
from .estimator import (EstimateTrace, GridSpec, IsaaOptions, alpha_hat, fft_estimate,
                        fft_profile, gamma_apply, hybrid_objective, map_isaa,
                        profile_equivalence_check, residual_pn_update)
from .exploitation import ambiguity_candidates, resolve_ambiguity, sample_cov_row

__version__ = "0.1.0"
