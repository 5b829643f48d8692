"""Square-root Gaussian mixture filtering with Kullback-Leibler mixture reduction."""
from .errors import (
    CovarianceBreakdownError,
    DegenerateWeightsError,
    GmmFilterError,
    LinearizationError,
    ModelMismatchError,
    ParticleDegeneracyError,
    SingularFactorError,
    SingularInnovationError,
)
from .filter import FilterConfig, FilterTrace, measurement_update, run_filter, time_update
from .mixture import (
    GaussianComponent,
    GaussianMixture,
    evaluate_pdf,
    mixture_moments,
    normalize_weights,
    sample,
)
from .model import (
    GmmStateSpaceModel,
    MeasurementComponent,
    NonlinearModel,
    ProcessComponent,
    Signal,
    SplitConfig,
    build_nonlinear,
    linearize_measurement,
    linearize_process,
    simulate,
    split_component,
)
from .reduction import ReductionConfig, kl_bound, merge_pair, reduce

__version__ = "0.1.0"
