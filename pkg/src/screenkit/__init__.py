"""Evaluation toolkit for opportunistic radiograph screening.

Submodules:

* ``image_pipeline``  - deterministic preprocessing (grayscale, Otsu crop,
  percentile rescale, bilinear resize)
* ``dataset_audit``   - manifests, WHO category mapping, perceptual-hash
  leakage scanning, composition tables
* ``metrics_core``    - curves, operating-point / regression / agreement
  metrics, score-table schema
* ``threshold_policy``- sensitivity-constrained threshold selection and
  fixed-threshold transfer
* ``stats_inference`` - stratified bootstrap CIs, Fisher-z, Kruskal-Wallis,
  chi-square
* ``report``          - evaluation runs producing versioned JSON reports
* ``cli``             - the ``screenkit`` command
"""

__version__ = "0.1.0"

from .dataset_audit import (
    ClassLabel,
    SampleRecord,
    SplitManifest,
    composition_table,
    hamming,
    leakage_scan,
    merge_stages,
    phash64,
    read_manifest,
    who_category,
    write_manifest,
)
from .errors import (
    ConfigurationError,
    CurveUndefinedError,
    FormatError,
    InferenceError,
    InsufficientDataError,
    ScreenkitError,
    ValidationError,
)
from .image_pipeline import (
    BoundingBox,
    PreprocessConfig,
    foreground_bbox,
    otsu_threshold,
    percentile_clip_rescale,
    preprocess,
    preprocess_record,
    resize_bilinear,
    to_grayscale,
)
from .metrics_core import (
    BlandAltmanSummary,
    ConfusionCounts,
    LabeledScores,
    OperatingPointMetrics,
    RegressionMetrics,
    ScoreRow,
    bland_altman,
    brier,
    confusion_at,
    operating_point_metrics,
    pr_curve,
    read_score_table,
    regression_metrics,
    roc_curve,
    write_score_table,
)
from .report import RunConfig, run_audit, run_develop, run_fixed
from .stats_inference import (
    BootstrapConfig,
    ConfidenceInterval,
    chi2_sf,
    chi_square_test,
    fisher_z_ci,
    kruskal_wallis,
    paired_bootstrap_ci,
    stratified_bootstrap_ci,
)
from .threshold_policy import (
    DEFAULT_TAU,
    PolicyConfig,
    PolicySelection,
    ThresholdGrid,
    evaluate_at_fixed,
    feasible_set,
    select_threshold,
)
