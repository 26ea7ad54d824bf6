"""Params/OPs accounting, PSNR, and per-branch high-frequency analysis.

Counting convention: a binary parameter costs 1/32 of a full-precision one and
a binary multiply-accumulate costs 1/64 of a full-precision one.

Per three-branch layer over ``N`` tokens (``m`` inputs, ``n`` outputs):

* binary params ``m*n``; FP params ``r*(m+n) + k + n`` (LRMB, SMB values, k_vec);
* binary ops ``N*m*n``; FP ops ``N*r*(m+n) + N*k + 2*N*n`` (LRMB, SMB, and the
  outer product plus Hadamard product of the scale compensation).

FP layers count ``m*n + n`` params and ``N*m*n`` ops. SMB coordinates are
storage, not parameters, and are not counted.
"""

from dataclasses import dataclass, field

import numpy as np

from .dense import conv_out_size
from .errors import ArgumentError, ShapeError, UnsupportedLayerError
from .layer import FpConvLayer, ThreeBranchLayer, ToyModel, branch_outputs

BINARY_PARAM_DIVISOR = 32
BINARY_OP_DIVISOR = 64
PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class LayerCost:
    kind: str
    tokens: int
    params_fp: int
    params_bin: int
    ops_fp: int
    ops_bin: int


@dataclass
class CostReport:
    params_fp: int
    params_bin: int
    ops_fp: int
    ops_bin: int
    layers: list[LayerCost] = field(default_factory=list)

    @property
    def params_total(self) -> float:
        return self.params_fp + self.params_bin / BINARY_PARAM_DIVISOR

    @property
    def ops_total(self) -> float:
        return self.ops_fp + self.ops_bin / BINARY_OP_DIVISOR

    @classmethod
    def from_layers(cls, layers: list[LayerCost]) -> "CostReport":
        return cls(
            params_fp=sum(l.params_fp for l in layers),
            params_bin=sum(l.params_bin for l in layers),
            ops_fp=sum(l.ops_fp for l in layers),
            ops_bin=sum(l.ops_bin for l in layers),
            layers=list(layers),
        )

    def to_text(self) -> str:
        lines = [
            f"params_total {_num(self.params_total)}",
            f"ops_total {_num(self.ops_total)}",
            f"params_fp {self.params_fp}",
            f"params_bin {self.params_bin}",
            f"ops_fp {self.ops_fp}",
            f"ops_bin {self.ops_bin}",
        ]
        for i, l in enumerate(self.layers):
            lines.append(
                f"layer {i} {l.kind} tokens {l.tokens} params_fp {l.params_fp} params_bin {l.params_bin} "
                f"ops_fp {l.ops_fp} ops_bin {l.ops_bin}"
            )
        return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def layer_cost(layer, tokens: int) -> LayerCost:
    m, n = layer.m, layer.n
    if isinstance(layer, FpConvLayer):
        return LayerCost("fp", tokens, m * n + n, 0, tokens * m * n, 0)
    r, k = layer.lrmb.rank, layer.smb.k
    return LayerCost(
        "binary",
        tokens,
        params_fp=r * (m + n) + k + n,
        params_bin=m * n,
        ops_fp=tokens * r * (m + n) + tokens * k + 2 * tokens * n,
        ops_bin=tokens * m * n,
    )


def _out_hw(layer, h, w):
    if layer.conv is None:
        return h, w
    c = layer.conv
    return conv_out_size(h, c.kh, c.pad, c.stride), conv_out_size(w, c.kw, c.pad, c.stride)


def cost_report(model: ToyModel, input_dims=(3, 64, 64), batch: int = 1) -> CostReport:
    c, h, w = input_dims
    if batch < 1:
        raise ArgumentError("batch must be >= 1")
    if c != model.head.in_channels:
        raise ShapeError(f"input has {c} channels, model expects {model.head.in_channels}")
    costs = []
    for i, layer in enumerate(model.layers):
        if i == len(model.layers) - 1:
            h, w = h * model.upsample, w * model.upsample
        h, w = _out_hw(layer, h, w)
        costs.append(layer_cost(layer, batch * h * w))
    return CostReport.from_layers(costs)


def psnr(a, b, peak: float = 1.0) -> float:
    """PSNR in dB on raw values, capped at 100 dB (also for identical inputs)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shapes differ {a.shape} vs {b.shape}")
    if not peak > 0:
        raise ArgumentError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def high_pass(x) -> np.ndarray:
    """``x`` minus its 3x3 box blur (reflect padding) over ``(n, c, h, w)``.

    Written as a mean of neighbour differences so constant maps give exactly 0.
    """
    h, w = x.shape[2:]
    mode = "reflect" if min(h, w) > 1 else "edge"
    p = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode=mode)
    return sum(x - p[:, :, dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3)) / 9.0


def high_freq_energy(x) -> float:
    return float(np.sum(high_pass(x) ** 2))


def branch_freq_proportion(layer: ThreeBranchLayer, x) -> tuple[float, float, float]:
    """Share of high-frequency energy produced by the (bmb, lrmb, smb) branches."""
    if not isinstance(layer, ThreeBranchLayer) or layer.conv is None:
        raise UnsupportedLayerError("frequency analysis needs a three-branch conv layer")
    energies = [high_freq_energy(o) for o in branch_outputs(layer, x)]
    total = sum(energies)
    if total == 0.0:
        return (0.0, 0.0, 0.0)
    return tuple(e / total for e in energies)
