"""Explicit perceptual quality metrics and a loss-descent probe.

Distribution-fit image statistics scored against a natural-image model,
patch-spectrum sharpness features with a built-in random-forest regressor,
the combined perceptual score with RMSE region classification, and a
finite-difference descent probe over the composite loss.
"""

from .backend import active_backend, set_backend
from .forest import (
    ForestModel,
    ForestParams,
    forest_predict,
    forest_train,
    load_forest,
    save_forest,
)
from .image_io import (
    GrayImage,
    crop_border,
    list_images,
    load_gray,
    mse_loss,
    rmse,
    save_pgm,
    save_png,
)
from .loss import (
    LossSpec,
    LossSpecError,
    ProbeAbortedError,
    ProbeTrace,
    TraceStep,
    composite_loss,
    finite_difference_gradient,
    parse_loss_spec,
    preset_spec,
    probe_descent,
)
from .msd import MsdFeature, msd_feature_loss, msd_features, tail_mass
from .niqe import (
    ModelMismatchError,
    MvgModel,
    extract_features,
    fit_mvg,
    fit_natural_model,
    load_model,
    mvg_distance,
    niqe_score,
    save_model,
)
from .nss import (
    AggdParams,
    GgdParams,
    InsufficientTextureError,
    MscnField,
    NssConfig,
    PatchFeature18,
    compute_mscn,
    fit_aggd,
    fit_ggd,
    patch_features,
    select_patches,
)
from .scoring import (
    ImageReport,
    Region,
    batch_report,
    ma_score,
    perceptual_score,
    region_of,
)

__version__ = "0.1.0"
