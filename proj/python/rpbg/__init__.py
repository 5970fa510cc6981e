"""Point-based neural rendering: Python access to the C++ core."""

from ._core import (  # noqa: F401
    ConfigError,
    DataError,
    NumericError,
    RpbgError,
    fft_loss,
    huber,
    lpips_distance,
    median_nn_distance,
    psnr,
    random_lpips_weights,
    raster_abi_version,
    rasterize,
    render_checkpoint,
    scene_summary,
    ssim,
    write_toy_scene,
)

__all__ = [name for name in dir() if not name.startswith("_")]
