"""Laban Movement Analysis descriptors, emotion classifiers and Shapley explanations
for 3D skeleton sequences."""

__version__ = "0.1.0"

from .classifiers import (CvPlan, DecisionTreeClassifier, LinearSVMClassifier,  # noqa: E402
                          RandomForestClassifier, grid_search_cv, load_model, predict, save_model)
from .descriptors import (DEFAULT_SCHEMA, FeatureSchema, FeatureTable, FeatureVector,  # noqa: E402
                          LMAFeatureExtractor, ThresholdPolicy, extract_dataset, extract_features)
from .motion import (MotionSequence, Skeleton, WindowSpec, derive_kinematics,  # noqa: E402
                     load_sequence, make_windows)

__all__ = [
    "CvPlan", "DecisionTreeClassifier", "LinearSVMClassifier", "RandomForestClassifier",
    "grid_search_cv", "load_model", "predict", "save_model", "DEFAULT_SCHEMA", "FeatureSchema",
    "FeatureTable", "FeatureVector", "LMAFeatureExtractor", "ThresholdPolicy", "extract_dataset",
    "extract_features", "MotionSequence", "Skeleton", "WindowSpec", "derive_kinematics",
    "load_sequence", "make_windows",
]
