"""Rescaled spike-and-slab smoothing with orthogonal polynomial bases."""

__version__ = "0.1.0"

from .basis import OrthoBasis, build_global, build_local
from .data import Dataset, SyntheticSpec, generate, load_csv, write_csv
from .errors import (
    DegenerateFitError,
    InputError,
    LocalFitError,
    NumericalError,
    PrecisionError,
    PreconditionError,
    RankError,
    SizeError,
    SlabSmoothError,
)
from .gibbs import McmcConfig, PosteriorSummary, PriorConfig, gibbs_fit, rescale_response
from .global_smoother import GlobalFit, dof, effective_kernel, fit_global, kernel_diagonal
from .local_smoother import LocalConfig, LocalFit, fit_curve, fit_point
from .theory import (
    DensityCurve,
    NullLimitInput,
    limiting_null_density,
    limiting_null_mean,
    mixture_density,
)
