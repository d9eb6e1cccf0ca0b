from .adl import (ADLBeamformer, BeamformerConfig, GRUNet, adl_weights, apply_weights,  # noqa: F401
                  normalize_steering, residual_mix, upper_triangular_index, vad_gate)
from .classical import (classical_mvdr, chunk_covariances, mvdr_weights,  # noqa: F401
                        principal_eigenvector, relative_transfer)
from .covariance import framewise_covariances, interference_mask  # noqa: F401
