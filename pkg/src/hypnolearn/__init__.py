"""Sleep-stage classification from polysomnogram recordings.

Pipeline: 30-second epochs -> 28 handcrafted features -> belief-network
posteriors -> sequence decoding (stacked LSTM or HMM), evaluated with
leave-one-out cross-validation over recordings.
"""

from hypnolearn.data import (
    SleepStage,
    Recording,
    Epoch,
    DatasetSplit,
    load_recording,
    load_dataset,
    write_recording,
    segment_epochs,
    remove_transition_epochs,
    balanced_split,
    loocv_folds,
)
from hypnolearn.features import RobustRangeScaler, extract_features, extract_feature_matrix
from hypnolearn.dbn import DeepBeliefNetwork, Rbm
from hypnolearn.lstm import StackedLstmClassifier, SequenceWindow, make_windows
from hypnolearn.hmm import SleepHmm, viterbi
from hypnolearn.metrics import ConfusionMatrix, confusion, f1_macro
from hypnolearn.synth import gen_dataset, gen_hypnogram, default_profiles, default_chain

__version__ = "0.1.0"

__all__ = [
    "SleepStage",
    "Recording",
    "Epoch",
    "DatasetSplit",
    "load_recording",
    "load_dataset",
    "write_recording",
    "segment_epochs",
    "remove_transition_epochs",
    "balanced_split",
    "loocv_folds",
    "RobustRangeScaler",
    "extract_features",
    "extract_feature_matrix",
    "DeepBeliefNetwork",
    "Rbm",
    "StackedLstmClassifier",
    "SequenceWindow",
    "make_windows",
    "SleepHmm",
    "viterbi",
    "ConfusionMatrix",
    "confusion",
    "f1_macro",
    "gen_dataset",
    "gen_hypnogram",
    "default_profiles",
    "default_chain",
    "__version__",
]
