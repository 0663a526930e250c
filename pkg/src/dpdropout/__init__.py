"""Differentially private dropout: noisy SGLD training of a one-hidden-layer
network with advanced-composition and zCDP privacy accounting."""

from .accountant import (
    AccountantConfig,
    CalibrationError,
    Method,
    PreconditionError,
    PrivacyBudget,
    PrivacyError,
    ZcdpBudget,
    calibrate_sigma,
    calibrate_sigma_ac,
    calibrate_sigma_zcdp,
    total_budget,
    total_budget_ac,
    total_budget_zcdp,
)
from .data import Dataset, load_bundled_digits, load_digits_csv, load_idx
from .harness import (
    PrivacyReport,
    TrainConfig,
    load_config,
    privacy_report,
    sweep_sigma_vs_eps,
    train_dpd,
    train_nonprivate,
)
from .mechanism import NoiseSpec, clip_by_l2, dropout_alpha_from_noise
from .model import ModelParams, forward, init_params

__version__ = "0.1.0"

__all__ = [
    "AccountantConfig",
    "CalibrationError",
    "Method",
    "PreconditionError",
    "PrivacyBudget",
    "PrivacyError",
    "ZcdpBudget",
    "calibrate_sigma",
    "calibrate_sigma_ac",
    "calibrate_sigma_zcdp",
    "total_budget",
    "total_budget_ac",
    "total_budget_zcdp",
    "Dataset",
    "load_bundled_digits",
    "load_digits_csv",
    "load_idx",
    "PrivacyReport",
    "TrainConfig",
    "load_config",
    "privacy_report",
    "sweep_sigma_vs_eps",
    "train_dpd",
    "train_nonprivate",
    "NoiseSpec",
    "clip_by_l2",
    "dropout_alpha_from_noise",
    "ModelParams",
    "forward",
    "init_params",
]
