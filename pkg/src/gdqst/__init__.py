"""Tomography of Gaussian states from one homodyne setting under known Gaussian dynamics."""

from .dynamics import (MeasurementRecord, StrippedSeries, apply_channel, evolve_discrete, homodyne_statistics,
                       qds_channel_at, record_continuous, record_discrete, sample_homodyne, strip_additive)
from .errors import (DecompositionError, DegenerateSpectrumError, GdqstError, IllConditionedError,
                     InsufficientDataError, MatrixExpOverflow, PureInconsistencyError, ReconstructionFailure,
                     ValidationError)
from .extension import (continuous_series_to_grid, extend_series_backward, extend_series_forward,
                        interpolation_weights, recurrence_from_matrix)
from .linalg import matrix_exp, minimal_polynomial, smat, spectral, svec, sym_kron
from .model import (GaussianChannel, GaussianState, HomodyneSetting, QdsGenerator, is_pure, random_channel,
                    random_generator, random_invertible_channel, random_setting, random_state,
                    random_unitary_channel, validate_channel, validate_generator, validate_state)
from .reconstruction import (build_system, diagnose, reconstruct_cov, reconstruct_disp, reconstruct_full,
                             reconstruct_pure, setting_completeness)
from .tolerances import Tolerances

__version__ = "0.1.0"
