"""Parameter containers and forward passes for the three branches of a layer.

All branches consume the same full-precision token matrix ``x_in`` of shape
``(N, m)`` and produce ``(N, n)``. The weight convention is ``x @ W`` with
``W`` of shape ``(m, n)``.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .bitcore import BitMatrix, sign_quantize, xnor_popcount_gemm
from .dense import as_matrix
from .errors import InvalidParamsError, ShapeError


def _check_input(x_in, m, branch):
    x_in = as_matrix(x_in, f"{branch} input")
    if x_in.shape[1] != m:
        raise ShapeError(f"{branch}: input has {x_in.shape[1]} features, expected {m}")
    return x_in


@dataclass
class LrmbParams:
    """Low-rank factor pair; the branch computes ``(x @ b_mat) @ a_mat``."""

    b_mat: np.ndarray  # (m, r)
    a_mat: np.ndarray  # (r, n)

    def __post_init__(self):
        self.b_mat = as_matrix(self.b_mat, "b_mat")
        self.a_mat = as_matrix(self.a_mat, "a_mat")
        m, r = self.b_mat.shape
        r2, n = self.a_mat.shape
        if r != r2:
            raise InvalidParamsError(f"rank mismatch: b_mat has {r} columns, a_mat has {r2} rows")
        if not 1 <= r <= min(m, n):
            raise InvalidParamsError(f"rank {r} outside [1, min({m}, {n})]")

    @property
    def rank(self) -> int:
        return self.b_mat.shape[1]

    @property
    def dims(self) -> tuple[int, int]:
        return self.b_mat.shape[0], self.a_mat.shape[1]

    def dense(self) -> np.ndarray:
        return self.b_mat @ self.a_mat


@dataclass
class SmbParams:
    """COO sparse matrix with fixed coordinates, sorted row-major, no duplicates."""

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        self.cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not len(self.rows) == len(self.cols) == len(self.values):
            raise InvalidParamsError("rows, cols and values must have equal length")
        if len(self.rows):
            if self.rows.min() < 0 or self.rows.max() >= self.m or self.cols.min() < 0 or self.cols.max() >= self.n:
                raise InvalidParamsError(f"sparse coordinate out of bounds for {self.m}x{self.n}")
            flat = self.rows * self.n + self.cols
            if np.any(np.diff(flat) <= 0):
                raise InvalidParamsError("sparse entries must be sorted row-major without duplicates")

    @classmethod
    def empty(cls, m: int, n: int) -> "SmbParams":
        return cls(m, n, [], [], [])

    @property
    def k(self) -> int:
        return len(self.values)

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    def dense(self) -> np.ndarray:
        out = np.zeros((self.m, self.n))
        out[self.rows, self.cols] = self.values
        return out


@dataclass
class BmbParams:
    """Binarized branch: packed ``Sign(latent)`` plus per-output-channel scales.

    ``latent`` is stored transposed, ``(n, m)``, one row per output channel.
    Models loaded from disk carry no latent (``latent is None``); they can run
    inference but not be trained.
    """

    packed: BitMatrix
    k_vec: np.ndarray
    latent: np.ndarray | None = None

    def __post_init__(self):
        self.k_vec = np.asarray(self.k_vec, dtype=np.float64).reshape(-1)
        if len(self.k_vec) != self.packed.rows:
            raise InvalidParamsError(f"k_vec has {len(self.k_vec)} entries, packed has {self.packed.rows} rows")
        if np.any(self.k_vec < 0):
            raise InvalidParamsError("k_vec entries must be non-negative")

    @classmethod
    def from_latent(cls, latent) -> "BmbParams":
        latent = np.array(latent, dtype=np.float64)
        return cls(sign_quantize(latent), np.abs(latent).mean(axis=1), latent)

    def set_latent(self, latent) -> None:
        """Replace the latent weight, re-packing signs and recomputing ``k_vec``."""
        latent = np.array(latent, dtype=np.float64)
        if self.latent is not None and latent.shape != self.latent.shape:
            raise ShapeError(f"latent shape {latent.shape} != {self.latent.shape}")
        self.packed = sign_quantize(latent)
        self.k_vec = np.abs(latent).mean(axis=1)
        self.latent = latent

    @property
    def dims(self) -> tuple[int, int]:
        return self.packed.cols, self.packed.rows

    def dense(self) -> np.ndarray:
        """Effective ``(m, n)`` weight ``Sign(latent).T`` scaled per output column."""
        return self.packed.to_signs().T * self.k_vec[None, :]


def lrmb_forward(p: LrmbParams, x_in) -> np.ndarray:
    m, _ = p.dims
    x_in = _check_input(x_in, m, "lrmb")
    return (x_in @ p.b_mat) @ p.a_mat


def smb_forward(p: SmbParams, x_in, backend: str | None = None) -> np.ndarray:
    x_in = _check_input(x_in, p.m, "smb")
    if p.k == 0:
        return np.zeros((x_in.shape[0], p.n))
    kernels = _backend.get(backend)
    return kernels.coo_scatter(np.ascontiguousarray(x_in), p.rows, p.cols, p.values, p.n)


def activation_scale(x_in) -> np.ndarray:
    """Per-token mean absolute value of the full-precision input."""
    return np.abs(x_in).mean(axis=1)


def bmb_forward(p: BmbParams, x_in, backend: str | None = None) -> np.ndarray:
    m, _ = p.dims
    x_in = _check_input(x_in, m, "bmb")
    raw = xnor_popcount_gemm(sign_quantize(x_in), p.packed, backend=backend)
    return raw * activation_scale(x_in)[:, None] * p.k_vec[None, :]
