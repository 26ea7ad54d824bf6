"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and results match the compiled module exactly.
"""

import numpy as np

# Caps the XNOR scratch buffer at roughly 32 MiB per chunk.
_CHUNK_ELEMS = 1 << 22


def xnor_popcount_gemm(x, w, cols):
    n_rows, n_words = x.shape
    n_out = w.shape[0]
    out = np.empty((n_rows, n_out), dtype=np.int64)
    if n_words == 0:
        out[:] = 0
        return out
    tail = cols % 64
    mask = np.full(n_words, np.uint64(0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    if tail:
        mask[-1] = np.uint64((1 << tail) - 1)
    step = max(1, _CHUNK_ELEMS // max(1, n_out * n_words))
    for start in range(0, n_rows, step):
        xs = x[start:start + step]
        agree = ~(xs[:, None, :] ^ w[None, :, :]) & mask
        matches = np.bitwise_count(agree).sum(axis=2, dtype=np.int64)
        out[start:start + step] = 2 * matches - cols
    return out


def coo_scatter(x, rows, cols, values, n_out):
    out = np.zeros((x.shape[0], n_out), dtype=np.float64)
    # Columns may repeat across entries, so accumulate unbuffered.
    np.add.at(out.T, cols, (x[:, rows] * values).T)
    return out
