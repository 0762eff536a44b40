"""Higher-order spectral analysis for telling natural from cloned speech.

The pipeline frames a waveform, estimates its bicoherence, runs
Gaussianity and linearity tests on it, and fuses a few summary features
into a bona-fide / cloned verdict.
"""

from hosa.bispectrum import (
    BicoherenceEstimate,
    BispectrumEstimate,
    CumulantGrid,
    estimate_bicoherence,
    estimate_bispectrum,
    mean_bicoherence_magnitude,
    phase_flatness,
    principal_domain,
    third_order_cumulant,
)
from hosa.config import AnalysisConfig, resolve_config
from hosa.detector import (
    DetectionResult,
    EvaluationReport,
    FeatureVector,
    Thresholds,
    analyze,
    calibrate,
    classify,
    detect_qpc_peaks,
    evaluate,
    extract_features,
    read_manifest,
)
from hosa.errors import (
    AnalysisError,
    CalibrationError,
    ContainerError,
    ConvergenceError,
    HosaError,
    InsufficientDataError,
    MaskedEstimateError,
    UnreadableFileError,
    UnsupportedBitDepthError,
    UnsupportedChannelsError,
    UnsupportedEncodingError,
    WavError,
)
from hosa.signal import FrameSet, Signal, SpectrogramGrid, load_wav, segment, spectrogram, write_wav
from hosa.stats import (
    TestResult,
    chi_square_sf,
    gaussianity_test,
    linearity_test,
    noncentral_chi2_cdf,
    noncentral_chi2_quantile,
)
from hosa.synth import (
    HammersteinModel,
    apply_hammerstein,
    generate_gaussian_noise,
    generate_linear_nongaussian,
    generate_qpc_triplet,
)

__version__ = "0.1.0"
