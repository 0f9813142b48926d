"""Federated low-rank gradient descent laboratory.

Simulates the FedLRGD algorithm and a federated-averaging baseline on
partitioned synthetic data, accounts their federated oracle complexity, and
checks the supporting approximation and timing bounds numerically.
"""

from .complexity import CostModel, EpochLedger, EpochRecord, EpochType, gamma
from .fedave import FedAveConfig, run_fedave
from .fedlrgd import FedLRGDConfig, run_fedlrgd
from .problem import Dataset, SeparableModel, SoftLabelLogistic, empirical_risk, full_gradient

__version__ = "0.1.0"

__all__ = [
    "CostModel",
    "Dataset",
    "EpochLedger",
    "EpochRecord",
    "EpochType",
    "FedAveConfig",
    "FedLRGDConfig",
    "SeparableModel",
    "SoftLabelLogistic",
    "empirical_risk",
    "full_gradient",
    "gamma",
    "run_fedave",
    "run_fedlrgd",
]
