"""EMG movement classification with multi-objective SVM hyperparameter tuning.

The pipeline: generate or load a multichannel corpus (`data`), window it and
compute six time-domain descriptors per channel (`features`), train
one-vs-rest RBF-kernel SVMs (`svm`), and search (C, gamma) with an elitist
multi-objective evolutionary algorithm (`nsga2`, `tuner`) that jointly
maximizes accuracy and minimizes false negatives of the rest class.
"""

__version__ = "0.1.0"

from .data import (CorpusError, DatasetSplit, MovementClass, Position,
                   RawRecording, SynthConfig, Window, load_recordings,
                   make_splits, segment_windows, synth_generate)
from .features import (FeatureConfig, FeatureVector, FusionMode, extract,
                       extract_batch, td_moments, tdd_six)
from .metrics import (ConfusionMatrix, accuracy, confusion, rest_fn,
                      rest_fn_rate, rest_recall)
from .nsga2 import (Bounds, EvolutionConfig, EvolutionResult, Individual,
                    OperatorParams, crowded_tournament_select,
                    crowding_distance, dominates, evolve,
                    fast_nondominated_sort, polynomial_mutation,
                    sbx_crossover, survivor_select)
from .svm import (BinarySvmModel, ConvergenceError, OvrModel, SvmHyperparams,
                  decision_value, ovr_from_json, ovr_to_json, predict,
                  predict_batch, rbf_kernel, train_binary, train_ovr)
from .tuner import (FrontSolution, SearchSpace, SolutionTag, TuneConfig,
                    TuneReport, hold_out_split, objective_eval, run_tuning,
                    select_extremes)
