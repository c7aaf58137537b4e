"""Iterative imputing network for multi-sensor time series."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Anchor,
    BlockClassification,
    GroundTruth,
    MaskState,
    Scenario,
    SensorDataset,
    classify_blocks,
    extract_anchor,
    is_valid_anchor,
    scenario_membership,
)
from .imputer import ImputationRun, TrainConfig, run_cascade  # noqa: E402
