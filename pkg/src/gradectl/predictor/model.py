"""Control predictor: source features -> low-level control vector."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..control import PRIMARY, ControlVector, quantize
from .features import FEATURE_NAMES, FEATURE_SCHEMA_VERSION, SourceFeatures
from .gbdt import GradientBoostedTrees

MODES = ("single", "multi")


class ControlPredictor(RegressorMixin, BaseEstimator):
    """Boosted-tree regressor over the five primary controls.

    ``mode="single"`` trains one ensemble per control; ``mode="multi"`` trains
    one ensemble with vector leaves minimizing the squared error summed over
    all controls.
    """

    def __init__(
        self,
        mode="multi",
        n_estimators=500,
        learning_rate=0.1,
        max_depth=6,
        min_samples_leaf=5,
        validation_fraction=0.1,
        n_iter_no_change=25,
        random_state=0,
    ):
        self.mode = mode
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.validation_fraction = validation_fraction
        self.n_iter_no_change = n_iter_no_change
        self.random_state = random_state

    def _make_gbdt(self) -> GradientBoostedTrees:
        return GradientBoostedTrees(
            n_estimators=self.n_estimators,
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            validation_fraction=self.validation_fraction,
            n_iter_no_change=self.n_iter_no_change,
            random_state=self.random_state,
        )

    def fit(self, X, Y, feature_names=FEATURE_NAMES):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        X, Y = check_X_y(X, Y, multi_output=True, y_numeric=True, dtype=float)
        if Y.ndim != 2:
            raise ValueError("Y must be 2-dimensional")
        self.feature_names_ = list(feature_names)
        self.n_features_in_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]
        if self.mode == "single":
            self.estimators_ = [
                self._make_gbdt().fit(X, Y[:, k], feature_names=self.feature_names_)
                for k in range(Y.shape[1])
            ]
        else:
            self.estimators_ = [self._make_gbdt().fit(X, Y, feature_names=self.feature_names_)]
        return self

    def predict(self, X):
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype=float)
        if self.mode == "single":
            return np.column_stack([est.predict(X) for est in self.estimators_])
        return self.estimators_[0].predict(X)

    def predict_controls(self, features) -> list[ControlVector]:
        """Quantized control vectors for a list of :class:`SourceFeatures` or a matrix."""
        check_is_fitted(self, "estimators_")
        if self.n_outputs_ != len(PRIMARY):
            raise ValueError(f"model has {self.n_outputs_} outputs, controls need {len(PRIMARY)}")
        if len(features) and isinstance(features[0], SourceFeatures):
            if tuple(self.feature_names_) != FEATURE_NAMES:
                raise ValueError("feature schema mismatch")
            X = np.vstack([f.as_array() for f in features])
        else:
            X = check_array(features, dtype=float)
        return [quantize(ControlVector.from_primary(row)) for row in self.predict(X)]

    # -- persistence -------------------------------------------------------

    def model_files(self) -> list[str]:
        if self.mode == "single":
            return [f"model_{name}.json" for name in PRIMARY]
        return ["model_multi.json"]

    def save(self, directory) -> list[Path]:
        check_is_fitted(self, "estimators_")
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, est in zip(self.model_files(), self.estimators_):
            path = directory / name
            est.save(path)
            paths.append(path)
        manifest = {
            "mode": self.mode,
            "params": self.get_params(),
            "feature_schema": self.feature_names_,
            "feature_schema_version": FEATURE_SCHEMA_VERSION,
            "outputs": list(PRIMARY),
            "files": self.model_files(),
        }
        (directory / "predictor.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return paths

    @classmethod
    def load(cls, directory) -> "ControlPredictor":
        directory = Path(directory)
        manifest = json.loads((directory / "predictor.json").read_text())
        if manifest.get("feature_schema_version") != FEATURE_SCHEMA_VERSION:
            raise ValueError("predictor was trained with a different feature schema version")
        model = cls(**manifest["params"])
        model.estimators_ = [GradientBoostedTrees.load(directory / f) for f in manifest["files"]]
        model.feature_names_ = list(manifest["feature_schema"])
        model.n_features_in_ = len(model.feature_names_)
        model.n_outputs_ = len(manifest["outputs"])
        return model


@dataclass(frozen=True)
class PredictorEvaluation:
    pearson: dict  # control name -> r, or None when undefined
    rmse: float

    def to_json(self) -> dict:
        return {"pearson": self.pearson, "rmse": self.rmse}


def pearson(x, y) -> float | None:
    """Pearson r, or ``None`` when either side has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    yc = y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if den == 0.0:
        return None
    return float(np.clip((xc @ yc) / den, -1.0, 1.0))


def regression_scores(Y_true, Y_pred, names=PRIMARY) -> PredictorEvaluation:
    Y_true = np.asarray(Y_true, dtype=float)
    Y_pred = np.asarray(Y_pred, dtype=float)
    if Y_true.shape != Y_pred.shape:
        raise ValueError("shape mismatch between targets and predictions")
    if len(Y_true) < 2:
        raise ValueError("need at least 2 instances")
    Y_true = Y_true.reshape(len(Y_true), -1)
    Y_pred = Y_pred.reshape(len(Y_pred), -1)
    r = {name: pearson(Y_true[:, k], Y_pred[:, k]) for k, name in enumerate(names[: Y_true.shape[1]])}
    rmse = float(np.sqrt(np.mean((Y_true - Y_pred) ** 2)))
    return PredictorEvaluation(r, rmse)


def evaluate_predictor(model, X, Y) -> PredictorEvaluation:
    """Per-control Pearson correlation and overall RMSE of ``model`` on ``(X, Y)``."""
    return regression_scores(Y, model.predict(X))
