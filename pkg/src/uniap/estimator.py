"""scikit-learn style facade so the pooling composes with the wider ecosystem."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .pooling import DEFAULT_THRESHOLDS, MaskPyramid, UniapConfig, run_uniap
from .tensor import FeatureMap, l2_normalize_rows


def _validate_feature_grid(X) -> np.ndarray:
    """Coerce input to a finite (H, W, d) float array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected an (H, W, d) feature grid, got shape {X.shape}")
    if min(X.shape) < 1:
        raise ValueError(f"all grid dimensions must be >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature grid contains non-finite values")
    return X


class AgglomerativePooling(BaseEstimator):
    """Multi-granular mask pooling over a dense token feature grid.

    Stateless in the sklearn sense: fit only validates parameters and input
    shape. transform maps an (H, W, d) grid to a MaskPyramid; predict returns
    the coarsest-level instance labeling as an (H, W) int array with -1 for
    tokens not covered by any emitted mask.
    """

    def __init__(
        self,
        thresholds=DEFAULT_THRESHOLDS,
        sigma=0.07,
        omega_f=0.6,
        omega_s=0.4,
        phi=5,
        dedup_iou=0.9,
        spatial_from_level=0,
        workers=1,
        normalize=True,
    ):
        self.thresholds = thresholds
        self.sigma = sigma
        self.omega_f = omega_f
        self.omega_s = omega_s
        self.phi = phi
        self.dedup_iou = dedup_iou
        self.spatial_from_level = spatial_from_level
        self.workers = workers
        self.normalize = normalize

    def _config(self) -> UniapConfig:
        return UniapConfig(
            thresholds=tuple(self.thresholds),
            sigma=self.sigma,
            omega_f=self.omega_f,
            omega_s=self.omega_s,
            phi=self.phi,
            dedup_iou=self.dedup_iou,
            spatial_from_level=self.spatial_from_level,
        )

    def _feature_map(self, X) -> FeatureMap:
        X = _validate_feature_grid(X)
        fm = FeatureMap.from_grid(X.astype(np.float32))
        if self.normalize:
            return l2_normalize_rows(fm)
        return FeatureMap(fm.height, fm.width, fm.dim, fm.data, normalized=True)

    def fit(self, X, y=None):
        X = _validate_feature_grid(X)
        self._config()
        self.n_features_in_ = X.shape[-1]
        return self

    def transform(self, X) -> MaskPyramid:
        return run_uniap(self._feature_map(X), self._config(), workers=self.workers)

    def fit_transform(self, X, y=None) -> MaskPyramid:
        return self.fit(X).transform(X)

    def predict(self, X) -> np.ndarray:
        """Coarsest covering instance label per token.

        Labels index into transform(X).all_masks("instance"); coarser levels
        overwrite finer ones, and -1 marks tokens no emitted mask covers.
        """
        pyramid = self.transform(X)
        labels = np.full(pyramid.height * pyramid.width, -1, dtype=np.int64)
        for idx, pm in enumerate(pyramid.all_masks("instance")):
            labels[pm.mask.bits] = idx
        return labels.reshape(pyramid.height, pyramid.width)
