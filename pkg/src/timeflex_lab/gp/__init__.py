from .cholesky import NotPositiveDefiniteError, cholesky
from .kernels import KernelKind, KernelSpec, covariance_matrix, kernel_eval, kernel_of_lag
from .sampling import GPDatasetConfig, feature_rng, generate_gp_timeset, regenerate_from_manifest, sample_gp
