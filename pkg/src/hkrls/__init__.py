"""Hierarchic kernel recursive least-squares for evenly sampled grids."""

from .hierarchic import (
    GridDataset,
    HkrlsModel,
    fit_2d,
    fit_3d,
    fit_general,
    load_model,
    predict_2d,
    predict_3d,
    predict_general,
    predict_grid,
    save_model,
)
from .kernels import KernelConfig, KernelFamily, gaussian, space_time
from .solver import KrlsModel, SolverError, krls_fit, krls_predict

__version__ = "0.1.0"
