"""codeflow: classification as distribution transport onto sinusoidal codewords.

Labels become mutually orthogonal sinusoidal codewords; a trained target
estimator transports feature vectors to codewords along a logistic-mean /
bridge-variance Gaussian path via an Euler ODE solver; prediction is a
cosine-similarity argmax against the codebook.
"""

from .checkpoint import load_model, save_model
from .data import (
    FeatureDataset,
    FeatureRecord,
    SyntheticSpec,
    generate_synthetic,
    read_dataset,
    split,
    write_dataset,
)
from .errors import (
    CodeflowError,
    ConfigError,
    DegenerateInputError,
    DimensionTooSmallError,
    FormatError,
    InvalidArgumentError,
    NumericError,
    OutOfDomainError,
)
from .estimator import (
    EstimatorConfig,
    EstimatorParams,
    forward,
    fuse_conditions,
    loss_and_gradients,
    parameter_count,
    timestep_embedding,
)
from .evaluation import (
    EvalReport,
    ExperimentConfig,
    dump_trajectory,
    evaluate,
    sweep_steps,
)
from .sampler import (
    InferenceResult,
    SamplerConfig,
    Trajectory,
    euler_step,
    infer_class,
    sample,
    sample_batch,
)
from .schedules import (
    PathPoint,
    ScheduleParams,
    alpha,
    alpha_derivative,
    mean,
    mean_derivative,
    path_point,
    perturb,
    std,
    std_log_derivative,
    vector_field,
)
from .taxonomy import (
    ClassTaxonomy,
    TaxonomyCodebook,
    build_codebook,
    classify,
    classify_batch,
    encode_class,
)
from .training import (
    TrainConfig,
    TrainState,
    sample_timestep,
    train_loop,
    train_step,
)

__version__ = "0.1.0"
