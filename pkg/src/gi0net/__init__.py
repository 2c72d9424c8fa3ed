"""Neural-network roughness estimation for G_I^0-distributed SAR intensity data."""

from .errors import DomainError, FormatError, IntegrityError, ParameterError, SpecError, TrainingDiverged
from .estimators import EstimationOutcome, Status, estimate_lcum, estimate_map, estimate_mle, estimate_nn
from .features import Reflect, Replicate, SyntheticSamples, compute_moments, pooled_moment_tensor
from .gi0 import Gi0Params, MosaicSpec, Region, SampleSet, generate_mosaic, log_density, sample, tie_gamma
from .network import MlpModel, conv_forward, forward, load_model, save_model
from .numerics import RngStream, digamma, ln_gamma, sample_gamma, trigamma

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "FormatError",
    "IntegrityError",
    "ParameterError",
    "SpecError",
    "TrainingDiverged",
    "EstimationOutcome",
    "Status",
    "estimate_lcum",
    "estimate_map",
    "estimate_mle",
    "estimate_nn",
    "Reflect",
    "Replicate",
    "SyntheticSamples",
    "compute_moments",
    "pooled_moment_tensor",
    "Gi0Params",
    "MosaicSpec",
    "Region",
    "SampleSet",
    "generate_mosaic",
    "log_density",
    "sample",
    "tie_gamma",
    "MlpModel",
    "conv_forward",
    "forward",
    "load_model",
    "save_model",
    "RngStream",
    "digamma",
    "ln_gamma",
    "sample_gamma",
    "trigamma",
]
