"""Piecewise-continuous neural networks with decoupled training."""
from .bench import (BenchmarkReport, ExperimentConfig, FFNNBagRegressor, ablate, build_ffnn_bag,
                    build_ffnn_lgt, metric_mae, metric_mape, metric_mse, run_experiment)
from .datagen import Dataset, DataError, SyntheticSpec, generate, load_csv, synth_target, write_csv
from .ffnn import (FFNNRegressor, Mlp, TrainConfig, TrainingError, backprop, gradient_check,
                   init_mlp, train_ffnn)
from .geometry import PcRepresentation, Piece, d_step1, dpc_upper_bound, hausdorff, realize
from .model import (PCNNRegressor, PcnnModel, compute_labels, deep_zero_set_membership,
                    load_model, save_model, split_budget, train_pcnn)
from .numerics import derive_seed, make_rng, ridge_solve, sigmoid
from .partition import (BallPartitioner, DataPartition, GeometricPart, delta_bar, delta_min,
                        get_partition, part_membership, partition_with_target)

__version__ = "0.1.0"

__all__ = [
    "BallPartitioner", "BenchmarkReport", "DataError", "DataPartition", "Dataset",
    "ExperimentConfig", "FFNNBagRegressor", "FFNNRegressor", "GeometricPart", "Mlp",
    "PCNNRegressor", "PcRepresentation", "PcnnModel", "Piece", "SyntheticSpec", "TrainConfig",
    "TrainingError", "ablate", "backprop", "build_ffnn_bag", "build_ffnn_lgt", "compute_labels",
    "d_step1", "deep_zero_set_membership", "delta_bar", "delta_min", "derive_seed",
    "dpc_upper_bound", "generate", "get_partition", "gradient_check", "hausdorff", "init_mlp",
    "load_csv", "load_model", "make_rng", "metric_mae", "metric_mape", "metric_mse",
    "part_membership", "partition_with_target", "realize", "ridge_solve", "run_experiment",
    "save_model", "sigmoid", "split_budget", "synth_target", "train_ffnn", "train_pcnn",
    "write_csv",
]
