"""Image-guided DEM enhancement.

Thin Python access to the C++ library: synthetic terrain and rendering,
trained-bundle enhancement, and the spectral validation metrics.
"""

from ._core import (
    OdenetError,
    depletion_score,
    enhance,
    estimate_shift,
    generate_terrain,
    load_dem,
    recovery_fraction,
    render,
    run_cli,
    save_dem,
    score_grid,
    slope_rmse,
)

__all__ = [
    "OdenetError",
    "depletion_score",
    "enhance",
    "estimate_shift",
    "generate_terrain",
    "load_dem",
    "recovery_fraction",
    "render",
    "run_cli",
    "save_dem",
    "score_grid",
    "slope_rmse",
]
