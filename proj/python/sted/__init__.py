"""Stereo event-intensity deblurring toolkit.

Thin wrapper around the compiled `_sted` extension: event voxelization and
simulation, blur synthesis, horizontal warping, image/disparity metrics,
synthetic dataset generation, and the training/evaluation entry points.
"""

try:
    # installed layout: the extension lives inside the package
    from ._sted import (  # noqa: F401
        __version__,
        backward_warp,
        bad_pixel_ratio,
        edi_deblur,
        epe,
        evaluate,
        generate_dataset,
        pixel_shuffle,
        pixel_unshuffle,
        psnr,
        simulate_events,
        ssim,
        synthesize_blur,
        train,
        voxelize,
    )
except ImportError:
    # development layout: the extension sits on PYTHONPATH next to the build
    from _sted import (  # noqa: F401
        __version__,
        backward_warp,
        bad_pixel_ratio,
        edi_deblur,
        epe,
        evaluate,
        generate_dataset,
        pixel_shuffle,
        pixel_unshuffle,
        psnr,
        simulate_events,
        ssim,
        synthesize_blur,
        train,
        voxelize,
    )

__all__ = [
    "backward_warp",
    "bad_pixel_ratio",
    "edi_deblur",
    "epe",
    "evaluate",
    "generate_dataset",
    "pixel_shuffle",
    "pixel_unshuffle",
    "psnr",
    "simulate_events",
    "ssim",
    "synthesize_blur",
    "train",
    "voxelize",
]
