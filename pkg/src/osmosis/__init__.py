"""Linear image osmosis filtering with operator splitting, plus imaging pipelines."""

import os

import numba

# the bundled TBB is too old for numba; OpenMP keeps concurrent callers safe
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"

from .applications import (  # noqa: E402
    FusionSpec,
    TqrCalibration,
    composite_reference,
    false_color,
    fuse_multimodal,
    light_balance,
    local_otsu_preprocess,
    tqr_calibrate,
)
from .discretization import (  # noqa: E402
    DirectionalSystem,
    apply_operator,
    assemble_directional,
    canonical_drift,
    mask_drift,
    seams_to_face_mask,
)
from .grid import DriftField, FaceMask, Image, Rect, RegionPartition, ensure_positive, mean  # noqa: E402
from .solvers import (  # noqa: E402
    DirectionalFactors,
    SolverConfig,
    check_explicit_bound,
    evolve,
    factorize_aos,
    step_aos,
    step_explicit,
    step_implicit,
)

__version__ = "0.1.0"

__all__ = [
    "DirectionalFactors",
    "DirectionalSystem",
    "DriftField",
    "FaceMask",
    "FusionSpec",
    "Image",
    "Rect",
    "RegionPartition",
    "SolverConfig",
    "TqrCalibration",
    "apply_operator",
    "assemble_directional",
    "canonical_drift",
    "check_explicit_bound",
    "composite_reference",
    "ensure_positive",
    "evolve",
    "factorize_aos",
    "false_color",
    "fuse_multimodal",
    "light_balance",
    "local_otsu_preprocess",
    "mask_drift",
    "mean",
    "seams_to_face_mask",
    "step_aos",
    "step_explicit",
    "step_implicit",
    "tqr_calibrate",
]
