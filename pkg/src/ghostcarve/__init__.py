"""Adaptive ghost imaging with Hadamard pattern carving.

Single-pixel image formation where the bucket detector is either a simulated
nonlinear evoked-energy readout or a human typing perceived intensities, and
low-overlap patterns are carved out of the measurement matrix on the fly.
"""

from .carving import (
    BucketEntry,
    BucketRecord,
    CarveState,
    adaptive_acquire,
    carve,
    column_carve,
    exact_rank,
    row_carve,
    zero_threshold,
)
from .detector import (
    CalibrationCurve,
    HarmonicEnergies,
    NoiseModel,
    ResponseModel,
    calibrate,
    extract_harmonics,
    measure_bucket,
    rescale_bias,
    rescale_bias_inverse,
    synthesize_evoked,
)
from .harness import (
    ExperimentConfig,
    SessionLog,
    acquisition_time,
    conscious_protocol,
    load_scene,
    quantize_level,
    replay_experiment,
    run_experiment,
)
from .patterns import (
    HadamardMatrix,
    PatternMatrix,
    ScanPlan,
    StimulusSpec,
    TileSpec,
    binarize,
    hadamard,
    make_scan_plan,
    render_tile_frame,
    stimulus_frames,
)
from .reconstruct import (
    Reconstruction,
    SceneImage,
    apply_zero_masks,
    assemble,
    carved_gi,
    ssim,
    standard_gi,
)

__version__ = "0.1.0"
