"""Focal-attention super-resolution: python surface over the C++ core."""

from ._core import (
    Model,
    bicubic_resize,
    build_model,
    closed_form,
    kernel_len,
    load_model,
    psnr,
    receptive_field,
    rgb_to_y,
    ssim,
)

__all__ = [
    "Model",
    "bicubic_resize",
    "build_model",
    "closed_form",
    "kernel_len",
    "load_model",
    "psnr",
    "receptive_field",
    "rgb_to_y",
    "ssim",
]
