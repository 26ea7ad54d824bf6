"""Quantization-aware training of a three-branch toy model by distillation.

Backward passes are written out by hand. The Sign function (on activations
and on the BMB latent weight) uses the clipped-identity straight-through
estimator: gradient 1 where ``|v| <= 1`` and 0 elsewhere. The scale factors
(activation mean-abs and per-channel ``k_vec``) are differentiated exactly,
with ``d|v|/dv = sign(v)`` and ``sign(0) = 0``.
"""

from dataclasses import dataclass

import numpy as np

from .dense import (
    as_matrix,
    col2im,
    im2col,
    leaky_relu,
    leaky_relu_backward,
    tensor_to_tokens,
    tokens_to_tensor,
    upsample_nearest,
    upsample_nearest_backward,
)
from .errors import ArgumentError, InvalidInputError, InvalidParamsError, NumericalError, ShapeError
from .layer import (
    LEAKY_SLOPE,
    FpConvLayer,
    ThreeBranchLayer,
    ToyModel,
    _unfold,
    centre_features,
    layer_forward,
    model_forward,
)

DEFAULT_LEARNING_RATE = 2e-5
DEFAULT_BATCH = 8


@dataclass
class GradSet:
    d_b_mat: np.ndarray
    d_a_mat: np.ndarray
    d_sparse_values: np.ndarray
    d_latent: np.ndarray


@dataclass
class FpGrad:
    d_weight: np.ndarray
    d_bias: np.ndarray


@dataclass
class TrainConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    iterations: int = 200
    batch: int = DEFAULT_BATCH
    seed: int = 0

    def __post_init__(self):
        # Zero is allowed so a frozen run can be traced.
        if not self.learning_rate >= 0:
            raise ArgumentError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.iterations < 0 or self.batch < 1:
            raise ArgumentError("iterations must be >= 0 and batch >= 1")
        if not 0 <= self.seed < 2**64:
            raise ArgumentError("seed must be an unsigned 64-bit integer")


def ste_sign_grad(v) -> np.ndarray:
    """Derivative used for Sign in the backward pass: 1 on [-1, 1], 0 outside."""
    return (np.abs(v) <= 1.0).astype(np.float64)


def distill_loss(student_out, teacher_out) -> float:
    s = np.asarray(student_out, dtype=np.float64)
    t = np.asarray(teacher_out, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeError(f"student output {s.shape} vs teacher output {t.shape}")
    return float(np.mean((s - t) ** 2))


def distill_loss_grad(student_out, teacher_out) -> np.ndarray:
    s = np.asarray(student_out, dtype=np.float64)
    t = np.asarray(teacher_out, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeError(f"student output {s.shape} vs teacher output {t.shape}")
    return 2.0 * (s - t) / s.size


def _grad_tokens(grad, shape, n_out):
    if shape is None:
        g = as_matrix(grad, "upstream gradient")
    else:
        g = np.asarray(grad, dtype=np.float64)
        if g.shape != (shape[0], n_out, shape[1], shape[2]):
            raise ShapeError(f"upstream gradient shape {g.shape} does not match layer output")
        g = tensor_to_tokens(g)
    if g.shape[1] != n_out:
        raise ShapeError(f"upstream gradient has {g.shape[1]} columns, layer has {n_out} outputs")
    return g


def _grad_input(d_tokens, conv, x, shape):
    if conv is not None:
        return col2im(d_tokens, np.shape(x), conv.kh, conv.kw, conv.pad, conv.stride)
    if shape is not None:
        return tokens_to_tensor(d_tokens, *shape)
    return d_tokens


def layer_backward(l: ThreeBranchLayer, x_in, upstream_grad) -> tuple[GradSet, np.ndarray]:
    if l.bmb.latent is None:
        raise InvalidParamsError("layer has no latent BMB weight (loaded for inference only)")
    tokens, shape = _unfold(l.conv, x_in, l.m)
    g = _grad_tokens(upstream_grad, shape, l.n)
    if g.shape[0] != tokens.shape[0]:
        raise ShapeError("upstream gradient and input have different token counts")
    m = l.m

    # LRMB: out = (x B) A
    xb = tokens @ l.lrmb.b_mat
    d_a = xb.T @ g
    g_a = g @ l.lrmb.a_mat.T
    d_b = tokens.T @ g_a
    d_x = g_a @ l.lrmb.b_mat.T

    # SMB: out[:, col] += x[:, row] * value
    smb = l.smb
    d_values = np.einsum("ik,ik->k", tokens[:, smb.rows], g[:, smb.cols])
    d_x += g @ smb.dense().T

    # BMB: out[i, c] = raw[i, c] * a[i] * k[c],  raw = Sign(x) Sign(L)^T
    latent = l.bmb.latent
    sx = np.where(tokens >= 0, 1.0, -1.0)
    sw = np.where(latent >= 0, 1.0, -1.0)
    raw = sx @ sw.T
    a = np.abs(tokens).mean(axis=1)
    k = l.bmb.k_vec
    g_scaled = g * a[:, None] * k[None, :]
    d_latent = (g_scaled.T @ sx) * ste_sign_grad(latent)
    d_k = np.einsum("ic,ic,i->c", g, raw, a)
    d_latent += d_k[:, None] * np.sign(latent) / m
    d_x += (g_scaled @ sw) * ste_sign_grad(tokens)
    d_a_scale = np.einsum("ic,ic,c->i", g, raw, k)
    d_x += d_a_scale[:, None] * np.sign(tokens) / m

    grads = GradSet(d_b, d_a, d_values, d_latent)
    return grads, _grad_input(d_x, l.conv, x_in, shape)


def fp_layer_backward(l: FpConvLayer, x_in, upstream_grad, input_grad: bool = True):
    """Returns ``(FpGrad, input_grad)``; the latter is None when not requested."""
    tokens, shape = _unfold(l.conv, x_in, l.m)
    g = _grad_tokens(upstream_grad, shape, l.n)
    grads = FpGrad(g.T @ tokens, g.sum(axis=0))
    if not input_grad:
        return grads, None
    conv = l.conv
    if conv is not None and conv.stride == 1 and conv.kh == conv.kw and conv.pad < conv.kh:
        # Stride-1 conv: input gradient is a correlation with the flipped kernel.
        c_in = l.in_channels
        w4 = l.weight.reshape(l.n, c_in, conv.kh, conv.kw)[:, :, ::-1, ::-1]
        flipped = w4.transpose(1, 0, 2, 3).reshape(c_in, -1)
        g4 = np.asarray(upstream_grad, dtype=np.float64)
        cols = im2col(g4, conv.kh, conv.kw, conv.kh - 1 - conv.pad, 1)
        return grads, tokens_to_tensor(cols @ flipped.T, *np.shape(x_in)[:1], *np.shape(x_in)[2:])
    return grads, _grad_input(g @ l.weight, l.conv, x_in, shape)


def _backward(layer, x_in, grad):
    if isinstance(layer, FpConvLayer):
        return fp_layer_backward(layer, x_in, grad)
    return layer_backward(layer, x_in, grad)


def model_forward_backward(model: ToyModel, img, target):
    """Loss against ``target`` plus per-layer gradients, in ``model.layers`` order."""
    cache = []
    h, centre = centre_features(layer_forward(model.head, img))
    for layer in model.body:
        z = layer_forward(layer, h)
        y = leaky_relu(z, LEAKY_SLOPE)
        residual = y.shape == h.shape
        cache.append((layer, h, z, residual))
        h = h + y if residual else y
    add_back = h.shape[1] == centre.shape[1]
    if add_back:
        h = h + centre
    up = upsample_nearest(h, model.upsample)
    out = layer_forward(model.tail, up)

    loss = distill_loss(out, target)
    grads = [None] * (len(model.body) + 2)
    grads[-1], d_up = fp_layer_backward(model.tail, up, distill_loss_grad(out, target))
    d_h = upsample_nearest_backward(d_up, model.upsample)
    d_centre = d_h.mean(axis=(2, 3), keepdims=True) if add_back else 0.0
    for i in range(len(cache) - 1, -1, -1):
        layer, h_in, z, residual = cache[i]
        grads[i + 1], d_in = _backward(layer, h_in, leaky_relu_backward(z, d_h, LEAKY_SLOPE))
        d_h = d_in + d_h if residual else d_in
    d_head = d_h - d_h.mean(axis=(2, 3), keepdims=True) + d_centre
    grads[0], _ = fp_layer_backward(model.head, img, d_head, input_grad=False)
    return loss, grads


def apply_update(layer, grad, lr: float) -> None:
    """One plain gradient-descent step, in place. SMB coordinates never move."""
    if isinstance(layer, FpConvLayer):
        layer.weight = layer.weight - lr * grad.d_weight
        layer.bias = layer.bias - lr * grad.d_bias
        return
    layer.lrmb.b_mat = layer.lrmb.b_mat - lr * grad.d_b_mat
    layer.lrmb.a_mat = layer.lrmb.a_mat - lr * grad.d_a_mat
    layer.smb.values = layer.smb.values - lr * grad.d_sparse_values
    layer.bmb.set_latent(layer.bmb.latent - lr * grad.d_latent)


def train_toy(model: ToyModel, teacher: ToyModel, data, cfg: TrainConfig, log=None) -> list[float]:
    """Distill ``teacher`` into ``model`` with plain gradient descent, in place.

    ``data`` is either a fixed input batch reused every step or a callable
    ``data(iteration) -> batch``. Returns ``iterations + 1`` losses: entry
    ``i`` is the loss before update ``i``; the last is the final loss.
    ``log``, when given, is called as ``log(i, loss)`` for each entry.
    """
    fixed = None if callable(data) else np.asarray(data, dtype=np.float64)
    fixed_target = None if fixed is None else model_forward(teacher, fixed)
    trace = []
    for it in range(cfg.iterations + 1):
        if fixed is None:
            batch = np.asarray(data(it), dtype=np.float64)
            target = model_forward(teacher, batch)
        else:
            batch, target = fixed, fixed_target
        try:
            loss, grads = model_forward_backward(model, batch, target)
        except InvalidInputError as exc:
            # Sign of a non-finite activation: the run has already diverged.
            raise NumericalError(f"non-finite values in training step: {exc}", iteration=it) from exc
        if not np.isfinite(loss):
            raise NumericalError("training loss is not finite", iteration=it)
        trace.append(loss)
        if log is not None:
            log(it, loss)
        if it == cfg.iterations:
            break
        for layer, grad in zip(model.layers, grads):
            apply_update(layer, grad, cfg.learning_rate)
    return trace
