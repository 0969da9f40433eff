"""Metasurface filter selection and unfolding reconstruction for snapshot spectral imaging.

Cubes are numpy arrays shaped (H, W, bands); measurements are (H, W).
"""

from ._snapspec import (
    FilterArray,
    FormatError,
    Model,
    NumericError,
    Selection,
    ShapeError,
    Spectra,
    __version__,
    adjoint,
    brute_force_oracle,
    build_mosaic,
    encode,
    generate_scene,
    generate_spectra,
    init_estimate,
    load_spectra,
    pearson,
    psnr,
    reconstruct_classical,
    run_cli,
    select_fps,
    select_innerproduct_baseline,
    ssim,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
