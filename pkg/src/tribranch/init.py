"""Decoupled initialization of the three branches from a full-precision weight.

Pipeline for ``W`` (m x n, ``x @ W`` convention):

1. truncated SVD: ``B = U_r diag(s_r)``, ``A = V_r^T``;
2. ``W' = W - B A``;
3. the k largest-magnitude entries of ``W'`` move into the sparse branch and
   are zeroed in ``W'``, giving ``W_bmb``;
4. ``W_bmb`` becomes the binarized branch's latent weight.

Each value of ``W`` lands in exactly one place, so
``B A + densify(sparse) + W_bmb == W`` up to rounding.
"""

from dataclasses import dataclass

import numpy as np

from .branches import BmbParams, LrmbParams, SmbParams
from .dense import as_matrix
from .errors import ArgumentError, InvalidInputError, NumericalError


@dataclass(frozen=True)
class InitReport:
    frob_sq_direct: float
    frob_sq_ours: float
    singular_values: np.ndarray


def truncated_svd(w, r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best rank-``r`` factorization ``w ~= b @ a`` with singular values folded into ``b``.

    Returns ``(b, a, sigmas)`` where ``sigmas`` holds all singular values in
    descending order. Uses LAPACK's divide-and-conquer SVD; a failure to
    converge surfaces as :class:`NumericalError`.
    """
    w = as_matrix(w, "weight")
    m, n = w.shape
    if not 1 <= r <= min(m, n):
        raise ArgumentError(f"rank {r} outside [1, {min(m, n)}] for a {m}x{n} matrix")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("weight has non-finite entries")
    try:
        u, s, vt = np.linalg.svd(w, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return u[:, :r] * s[:r], vt[:r].copy(), s


def extract_topk(w_prime, k: int) -> tuple[SmbParams, np.ndarray]:
    """Move the ``k`` largest-magnitude entries of ``w_prime`` into a sparse matrix.

    Ties at the threshold go to the earlier entry in row-major order, so
    exactly ``k`` entries are always taken.
    """
    w_prime = as_matrix(w_prime, "w_prime")
    m, n = w_prime.shape
    if not 0 <= k <= m * n:
        raise ArgumentError(f"k={k} outside [0, {m * n}]")
    flat = w_prime.reshape(-1)
    order = np.argsort(-np.abs(flat), kind="stable")
    picked = np.sort(order[:k])
    rows, cols = np.divmod(picked, n)
    sparse = SmbParams(m, n, rows, cols, flat[picked])
    w_bmb = w_prime.copy()
    w_bmb[rows, cols] = 0.0
    return sparse, w_bmb


def direct_binarization_residual(w) -> float:
    """``||W - alpha Sign(W)||_F^2`` with the scalar scale ``alpha = mean|W|``."""
    w = as_matrix(w, "weight")
    alpha = np.abs(w).mean()
    return float(np.sum((w - alpha * np.where(w >= 0, 1.0, -1.0)) ** 2))


def decoupled_init(w, r: int, k: int) -> tuple[LrmbParams, SmbParams, BmbParams, InitReport]:
    w = as_matrix(w, "weight")
    b, a, sigmas = truncated_svd(w, r)
    w_prime = w - b @ a
    sparse, w_bmb = extract_topk(w_prime, k)
    lrmb = LrmbParams(b, a)
    bmb = BmbParams.from_latent(w_bmb.T)
    residual = w - lrmb.dense() - sparse.dense() - bmb.dense()
    report = InitReport(
        frob_sq_direct=direct_binarization_residual(w),
        frob_sq_ours=float(np.sum(residual**2)),
        singular_values=sigmas,
    )
    return lrmb, sparse, bmb, report


def direct_init(w) -> tuple[LrmbParams, SmbParams, BmbParams]:
    """Baseline: binarize ``W`` as-is, with a zero rank-1 LRMB and an empty SMB."""
    w = as_matrix(w, "weight")
    m, n = w.shape
    return LrmbParams(np.zeros((m, 1)), np.zeros((1, n))), SmbParams.empty(m, n), BmbParams.from_latent(w.T)
