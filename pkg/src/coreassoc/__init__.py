"""Core spatial association of spatial time series.

Trim dominant temporal singular components, denoise correlation matrices
with the Marčenko-Pastur bulk edge, and summarise spatial dependence with
Pearson and Bergsma correlations and the Spatial Bergsma statistic.
"""

__version__ = "0.1.0"

from .dependence import (WeightMatrix, bergsma_matrix, bergsma_rho, morans_i, spatial_bergsma,
                         weights_expdecay, weights_lag1)
from .errors import ConfigError, CoreAssocError, DataError, NumericError
from .ingest import (DtrConfig, GridMeta, StsMatrix, aggregate, compute_dtr, filter_complete,
                     slice_window)
from .linalg import (AssociationMatrix, acf, classical_detrend, eig_sym, gsvd, pearson_matrix,
                     svd)
from .ordering import SpatialOrder, apply_order, hilbert_order, spiral_order
from .rmt import Esd, MpBounds, esd, esd_series, mp_bounds, mp_denoise, significant_eigs
from .trim import (SvNullModel, TrimResult, algorithm1, count_significant, gsvd_retention_check,
                   sv_null_thresholds, trim_to_depth)

__all__ = [
    "WeightMatrix", "bergsma_matrix", "bergsma_rho", "morans_i", "spatial_bergsma",
    "weights_expdecay", "weights_lag1",
    "ConfigError", "CoreAssocError", "DataError", "NumericError",
    "DtrConfig", "GridMeta", "StsMatrix", "aggregate", "compute_dtr", "filter_complete", "slice_window",
    "AssociationMatrix", "acf", "classical_detrend", "eig_sym", "gsvd", "pearson_matrix", "svd",
    "SpatialOrder", "apply_order", "hilbert_order", "spiral_order",
    "Esd", "MpBounds", "esd", "esd_series", "mp_bounds", "mp_denoise", "significant_eigs",
    "SvNullModel", "TrimResult", "algorithm1", "count_significant", "gsvd_retention_check",
    "sv_null_thresholds", "trim_to_depth",
]
