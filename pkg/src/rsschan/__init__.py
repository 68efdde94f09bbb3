"""Two-strip roadside-scatterer channel model for vehicle-to-vehicle links."""

from .errors import (
    CoincidentPoint,
    ConstraintViolation,
    DegenerateBins,
    DegenerateGeometry,
    EmptyInput,
    Infeasible,
    InsufficientLength,
    MaxIterations,
    NegativeDensity,
    NonPositiveArea,
    NonPositiveFrequency,
    NonUniformGrid,
    OutOfBand,
    ParallelRays,
    QuadratureFailure,
    RssError,
    UnsupportedRegime,
)
from .geometry import (
    CriticalAngles,
    GeometryConstants,
    LosParameters,
    ModelConfig,
    RssRegion,
    ValidatedConfig,
    VehicleState,
    aoa_of_point,
    aod_of_point,
    config_from_mapping,
    critical_angles,
    doppler_of_angles,
    doppler_of_points,
    geometry_constants,
    load_config_file,
    los_parameters,
    validate_config,
    wrap_angle,
)
from .analytic_pdf import (
    AngleSupport,
    DensityGrid,
    DisjointSupport,
    DopplerSupport,
    SwitchCase,
    aoa_aod_grid,
    build_angle_support,
    build_doppler_support,
    disjointify,
    doppler_aoa_grid,
    doppler_bounds,
    dpdf,
    dpdf_curve,
    inverse_doppler,
    inverse_point,
    joint_aoa_aod_pdf,
    joint_doppler_aoa_pdf,
)
from .spectrum import DopplerStats, SpectrumCurve, doppler_stats, dpsd, sweep
from .montecarlo import (
    GainSeries,
    GofReport,
    HistogramEstimate,
    ScattererSet,
    chi_square_test,
    doppler_samples,
    estimate_dpsd,
    estimate_histogram,
    gain_series,
    sample_scatterers,
)
from .fitting import (
    FitProblem,
    FitReport,
    MeasuredSpectrum,
    SceneSpec,
    fit,
    ingest_spectrum,
    objective,
)

__version__ = "0.1.0"
