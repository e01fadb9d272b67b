"""scikit-learn style wrappers around the design pipeline.

Rows of ``X`` are lens designs ``(R, k, k4)`` with optional extra columns
``offset_x`` and ``n_lens``. The physics lives in :mod:`pillarlens.optimize`;
these classes only adapt it to ``fit``/``transform``/``predict``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .coupling import FiberSpec
from .geometry import AsphericLens, k4_from_height_error
from .optimize import DEFAULT_MATCH_RADII, DesignContext, GridConfig, evaluate_many, match_fiber
from .wave import SourceSpec

FEATURES = ("R", "k", "k4", "offset_x", "n_lens")
OUTPUTS = ("mfd", "na", "eta014", "gaussianity", "bimodal", "eta_na", "eta_overlap")


def _context(est) -> DesignContext:
    return DesignContext(
        source=est.source if est.source is not None else SourceSpec(),
        fiber=est.fiber if est.fiber is not None else FiberSpec(),
        grid=est.grid if est.grid is not None else GridConfig(),
        workers=est.workers,
    )


def _lenses(X) -> list[AsphericLens]:
    X = check_array(X, dtype=float, ensure_min_features=3)
    if X.shape[1] > len(FEATURES):
        raise ValueError(f"at most {len(FEATURES)} columns {FEATURES}, got {X.shape[1]}")
    defaults = np.array([np.nan, 0.0, 0.0, 0.0, 1.45])
    full = np.tile(defaults, (X.shape[0], 1))
    full[:, : X.shape[1]] = X
    return [AsphericLens(R=r[0], k=r[1], k4=r[2], n_lens=r[4], offset_x=r[3]) for r in full]


def _rows(records) -> np.ndarray:
    out = np.empty((len(records), len(OUTPUTS)))
    for i, rec in enumerate(records):
        s, c = rec.stats, rec.coupling
        out[i] = (s.mfd, s.na, s.power_in_na014, s.gaussianity, float(s.bimodal),
                  c.eta_na, c.eta_overlap)
    return out


class LensDesignEvaluator(TransformerMixin, BaseEstimator):
    """Map lens designs to their simulated mode and coupling figures.

    Stateless: ``fit`` only validates the configuration.

    Parameters
    ----------
    source, fiber, grid : optional
        Simulation context; library defaults when ``None``.
    workers : int
        Process count for evaluating rows.

    Examples
    --------
    >>> ev = LensDesignEvaluator(grid=GridConfig(n=128))
    >>> ev.fit_transform([[1.2, 0.0, 0.5]]).shape
    (1, 7)
    """

    def __init__(self, source=None, fiber=None, grid=None, workers=1):
        self.source = source
        self.fiber = fiber
        self.grid = grid
        self.workers = workers

    def fit(self, X=None, y=None):
        self.context_ = _context(self)
        if X is not None:
            self.n_features_in_ = check_array(X, dtype=float, ensure_min_features=3).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "context_")
        return _rows(evaluate_many(_lenses(X), self.context_))

    def get_feature_names_out(self, input_features=None):
        return np.array(OUTPUTS, dtype=object)


class FiberMatchedLens(RegressorMixin, BaseEstimator):
    """Lens matched to a fibre; predicts overlap efficiency under perturbations.

    ``fit`` runs the two-stage fibre match (``X`` and ``y`` are ignored).
    ``predict`` takes rows of ``(offset_x, dH)`` and returns the overlap
    efficiency of the matched lens shifted by ``offset_x`` and with a height
    error ``dH`` absorbed into ``k4``.

    Attributes
    ----------
    lens_ : AsphericLens
        Matched design.
    result_ : MatchResult
        Full optimiser output.
    """

    def __init__(self, source=None, fiber=None, grid=None, workers=1,
                 radii=DEFAULT_MATCH_RADII, max_iters=200, ftol=1e-4, start=None):
        self.source = source
        self.fiber = fiber
        self.grid = grid
        self.workers = workers
        self.radii = radii
        self.max_iters = max_iters
        self.ftol = ftol
        self.start = start

    def fit(self, X=None, y=None):
        ctx = _context(self)
        self.result_ = match_fiber(ctx, self.radii, self.max_iters, self.ftol, start=self.start)
        self.lens_ = self.result_.lens
        self.context_ = ctx
        return self

    def _perturbed(self, X) -> list[AsphericLens]:
        X = check_array(X, dtype=float, ensure_min_features=1)
        if X.shape[1] > 2:
            raise ValueError("rows are (offset_x[, dH])")
        out = []
        for row in X:
            lens = self.lens_.replace(offset_x=float(row[0]))
            if X.shape[1] == 2 and row[1] != 0:
                lens = k4_from_height_error(lens, float(row[1]))
            out.append(lens)
        return out

    def predict(self, X):
        check_is_fitted(self, "lens_")
        recs = evaluate_many(self._perturbed(X), self.context_)
        return np.array([r.coupling.eta_overlap for r in recs])
