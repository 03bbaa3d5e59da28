"""Uncertainty calibration harness for unpaired image translation."""

from ._uqih import (
    Error,
    InvalidArgument,
    IoError,
    NumericalError,
    add_gaussian_noise,
    cwssim,
    embed_toy,
    evaluate_stacks,
    fid_embeddings,
    fid_images,
    frechet_distance,
    normalize_minmax,
    otsu_threshold,
    parse_patches,
    pearson,
    pixelwise_std,
    psd,
    register_translation,
    run_cli,
    spearman,
    sqrtm_psd,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
