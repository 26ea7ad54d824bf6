"""Binary + low-rank + sparse three-branch matrix compression.

The compiled XNOR-popcount kernel is used when built; otherwise a numpy
fallback with identical results is selected at import (see ``BACKEND``).
"""

from ._backend import DEFAULT as BACKEND
from .account import CostReport, branch_freq_proportion, cost_report, psnr
from .bitcore import BitMatrix, sign_quantize, xnor_popcount_gemm
from .branches import BmbParams, LrmbParams, SmbParams, bmb_forward, lrmb_forward, smb_forward
from .init import InitReport, decoupled_init, extract_topk, truncated_svd
from .layer import ConvSpec, FpConvLayer, ThreeBranchLayer, ToyModel, layer_forward, model_forward
from .train import GradSet, TrainConfig, distill_loss, layer_backward, train_toy

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BitMatrix",
    "BmbParams",
    "ConvSpec",
    "CostReport",
    "FpConvLayer",
    "GradSet",
    "InitReport",
    "LrmbParams",
    "SmbParams",
    "ThreeBranchLayer",
    "ToyModel",
    "TrainConfig",
    "bmb_forward",
    "branch_freq_proportion",
    "cost_report",
    "decoupled_init",
    "distill_loss",
    "extract_topk",
    "layer_backward",
    "layer_forward",
    "lrmb_forward",
    "model_forward",
    "psnr",
    "sign_quantize",
    "smb_forward",
    "train_toy",
    "truncated_svd",
    "xnor_popcount_gemm",
]
