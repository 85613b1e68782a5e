"""Surrogate regressors: thin-plate RBF and a small MLP."""
from .io import load_surrogate, save_surrogate
from .metrics import DegenerateMetric, average_model_error, r_squared, r_squared_columns, rmse
from .mlp import MlpSurrogate, TrainConfig, TrainingDiverged, mlp_train
from .rbf import RbfFitError, RbfSurrogate, rbf_fit, rbf_predict, thin_plate
from .training import MlpTrainer, RbfTrainer, dedupe, tune_mlp, tune_rbf
