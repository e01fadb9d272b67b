"""Scalar-optics design of aspheric microlenses for fibre-coupled micropillars."""

from .analysis import (
    GAUSSIANITY_THRESHOLD,
    ModeStats,
    encircled_fraction,
    gaussianity,
    mfd_contour,
    mfd_d4sigma,
    mode_stats,
    na_1e2,
)
from .coupling import (
    CouplingReport,
    FiberSpec,
    consistency_check,
    eta_na,
    fiber_mode,
    fiber_preset,
    mfd_from_na,
    na_from_mfd,
    overlap_efficiency,
    smf_coupling,
)
from .geometry import (
    AsphericLens,
    HeightMap,
    height_map,
    k4_from_height_error,
    lens_height,
    sag,
    scale_lens,
)
from .optimize import (
    DesignContext,
    GridConfig,
    MatchResult,
    ScalingFit,
    SweepRecord,
    best_k4,
    evaluate_design,
    family_scan,
    match_fiber,
    sweep_k,
    sweep_k4,
    tolerance_height,
    tolerance_offset,
)
from .wave import (
    ComplexFieldGrid,
    FarFieldMap,
    SourceSpec,
    apply_thin_lens,
    far_field,
    gaussian_source,
    propagate_asm,
    propagate_through_lens,
)

__version__ = "0.1.0"
