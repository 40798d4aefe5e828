"""Signal processing on a vertex set whose shift operator is known only in distribution."""

from .basechange import (
    Coarsening,
    DiscreteMap,
    ParamMap,
    identity_map,
    pullback_filter_via_fibers,
    pullback_kernel,
    pullback_kernel_filter,
    stretch_consistency,
    stretch_map,
)
from .ensemble import (
    Delta,
    Discrete,
    Fiber,
    IntervalFamily,
    OperatorEnsemble,
    PiecewiseConstant,
    QuadratureRule,
    TableDensity,
    TruncatedGaussian,
    Uniform,
    compile_spec,
    fiber_at,
    pushforward,
)
from .errors import CertificateError, DGSPError, DimensionError, NumericalError, ParseError
from .filters import (
    BandSpec,
    BiPolynomial,
    ConvolutionFilter,
    FilterKernel,
    band_pass,
    bandlimit_residual,
    bottom,
    constant_kernel,
    convolution_matrix,
    eval_bipolynomial,
    fit_bipolynomial,
    lambda_kernel,
    response_kernel,
    signal_kernel,
    table_kernel,
)
from .learning import (
    AnomalyDetector,
    AnomalyLoss,
    CustomLoss,
    GibbsConfig,
    HighFreqLoss,
    MHConfig,
    RiskTable,
    TrainingSet,
    anomaly_loss,
    empirical_risk,
    gibbs_exact,
    highfreq_loss,
    mh_sample,
    posterior_spec,
)
from .operators import (
    Edge,
    EigenSystem,
    SymOperator,
    VertexSet,
    eigendecompose,
    knn_graph,
    laplacian_from_edges,
    lattice_edges,
)
from .sampling import (
    BandPassSpectrum,
    ReconstructionReport,
    SamplingPlan,
    analyze,
    convexity_check,
    nonuniqueness_witness,
    plan,
    reconstruct,
)
from .transform import FiberSignals, SpectralCoefficients, expectation, fiberwise_inverse, forward, inverse

__version__ = "0.1.0"
