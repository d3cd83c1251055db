from .features import (
    FEATURE_NAMES,
    FEATURE_SCHEMA_VERSION,
    FeatureError,
    SourceFeatureExtractor,
    SourceFeatures,
    extract_features,
    resolve_source_grade,
)
from .gbdt import GradientBoostedTrees, RegressionTree
from .model import ControlPredictor, PredictorEvaluation, evaluate_predictor, pearson, regression_scores

__all__ = [
    "FEATURE_NAMES",
    "FEATURE_SCHEMA_VERSION",
    "ControlPredictor",
    "FeatureError",
    "GradientBoostedTrees",
    "PredictorEvaluation",
    "RegressionTree",
    "SourceFeatureExtractor",
    "SourceFeatures",
    "evaluate_predictor",
    "extract_features",
    "pearson",
    "regression_scores",
    "resolve_source_grade",
]
