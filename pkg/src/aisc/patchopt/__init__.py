"""Adversarial-patch mathematics: losses, geometry, masks, and optimization."""
from .geometry import (
    Box,
    PinholeModel,
    composite,
    gaussian_kernel,
    gaussian_smooth,
    perspective_warp,
    resize_bilinear,
    resize_bilinear_vjp,
    scaled_box,
    zoom_factor,
)
from .losses import (
    AnchorSet,
    LossWeights,
    combine_loss,
    ensemble_adv_loss,
    load_palette,
    nps_loss,
    obj_loss,
    targeted_cls_loss,
    tv_loss,
)
from .masks import random_block_mask
from .optim import (
    PatchState,
    adam_step,
    frame_loss_and_grad,
    make_ensemble_provider,
    momentum_step,
    optimize_patch,
    save_trace_csv,
)
from .toy import ToyDetector, mean_objectness

__all__ = [
    "AnchorSet",
    "Box",
    "LossWeights",
    "PatchState",
    "PinholeModel",
    "ToyDetector",
    "adam_step",
    "combine_loss",
    "composite",
    "ensemble_adv_loss",
    "frame_loss_and_grad",
    "gaussian_kernel",
    "gaussian_smooth",
    "load_palette",
    "make_ensemble_provider",
    "mean_objectness",
    "momentum_step",
    "nps_loss",
    "obj_loss",
    "optimize_patch",
    "perspective_warp",
    "random_block_mask",
    "resize_bilinear",
    "resize_bilinear_vjp",
    "save_trace_csv",
    "scaled_box",
    "targeted_cls_loss",
    "tv_loss",
    "zoom_factor",
]
