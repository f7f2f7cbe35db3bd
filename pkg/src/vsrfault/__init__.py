"""Current-sensor fault diagnosis for three-phase PWM rectifiers.

Synthetic phase currents with soft/hard sensor faults, per-cycle texture
features and a from-scratch bagging random forest.
"""

from .dataset import Dataset, EvalReport, build_dataset, evaluate, repeated_eval, split, tree_sweep
from .diagnosis import DiagnosisRecord, diagnose_cycle, diagnose_stream
from .features import extract_raw, extract_texture, phase_moments
from .forest import (
    DecisionTree,
    ForestModel,
    TrainParams,
    best_split,
    bootstrap,
    ensemble_error_report,
    gini,
    predict,
    predict_class,
    predict_proba,
    train_forest,
    train_tree,
)
from .labels import CLASS_NAMES, class_to_labels
from .signal import (
    Condition,
    CycleWindow,
    FaultState,
    Scenario,
    SignalConfig,
    ideal_phase_current,
    synthesize_cycle,
    synthesize_stream,
)

__version__ = "0.1.0"
