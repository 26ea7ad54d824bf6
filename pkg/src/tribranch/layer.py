"""Three-branch compressed layers, full-precision head/tail convs, toy SR model.

Toy model data flow::

    h = head(img);  c = spatial mean of h;  h = h - c
    for each body layer:  y = leaky_relu(layer(h));  h = h + y if same shape else y
    h = h + c  (when the body ends with the head's channel count)
    out = tail(upsample_nearest(h))

Every binarized layer therefore runs at input resolution on zero-mean
features.
"""

from dataclasses import dataclass, field

import numpy as np

from .branches import BmbParams, LrmbParams, SmbParams, bmb_forward, lrmb_forward, smb_forward
from .dense import (
    as_matrix,
    as_tensor4,
    conv_out_size,
    im2col,
    leaky_relu,
    tensor_to_tokens,
    tokens_to_tensor,
    upsample_nearest,
)
from .errors import ArgumentError, InvalidParamsError, ShapeError
from .init import decoupled_init, direct_init

LEAKY_SLOPE = 0.2
DEFAULT_RANK = 8
DEFAULT_SPARSITY_MULT = 2
DEFAULT_UPSAMPLE = 4
TOY_CHANNELS = (3, 32, 32, 32)


@dataclass(frozen=True)
class ConvSpec:
    kh: int
    kw: int
    pad: int = 0
    stride: int = 1

    def __post_init__(self):
        if self.kh < 1 or self.kw < 1 or self.stride < 1 or self.pad < 0:
            raise InvalidParamsError(f"invalid conv spec {self}")
        if max(self.kh, self.kw, self.pad, self.stride) > 255:
            raise InvalidParamsError("conv spec fields must fit in one byte")

    @property
    def window(self) -> int:
        return self.kh * self.kw


def _unfold(conv: ConvSpec | None, x, m: int):
    """Token matrix for a layer input plus the spatial output shape (or None)."""
    if conv is None:
        if np.ndim(x) == 4:
            x = as_tensor4(x)
            n, _, h, w = x.shape
            tokens = tensor_to_tokens(x)
            shape = (n, h, w)
        else:
            tokens, shape = as_matrix(x, "linear input"), None
    else:
        x = as_tensor4(x, "conv input")
        n, c, h, w = x.shape
        if c * conv.window != m:
            raise ShapeError(f"conv layer expects {m // conv.window} channels, got {c}")
        tokens = im2col(x, conv.kh, conv.kw, conv.pad, conv.stride)
        shape = (n, conv_out_size(h, conv.kh, conv.pad, conv.stride), conv_out_size(w, conv.kw, conv.pad, conv.stride))
    if tokens.shape[1] != m:
        raise ShapeError(f"layer expects {m} input features, got {tokens.shape[1]}")
    return tokens, shape


def _fold(tokens, shape):
    return tokens if shape is None else tokens_to_tensor(tokens, *shape)


@dataclass
class ThreeBranchLayer:
    lrmb: LrmbParams
    smb: SmbParams
    bmb: BmbParams
    conv: ConvSpec | None = None

    def __post_init__(self):
        dims = {self.lrmb.dims, (self.smb.m, self.smb.n), self.bmb.dims}
        if len(dims) != 1:
            raise InvalidParamsError(f"branch dimensions disagree: {sorted(dims)}")
        if self.conv is not None and self.m % self.conv.window:
            raise InvalidParamsError(f"in_features {self.m} not divisible by kernel window {self.conv.window}")

    @property
    def m(self) -> int:
        return self.lrmb.dims[0]

    @property
    def n(self) -> int:
        return self.lrmb.dims[1]

    @property
    def in_channels(self) -> int:
        return self.m if self.conv is None else self.m // self.conv.window

    @property
    def out_channels(self) -> int:
        return self.n

    def dense_weight(self) -> np.ndarray:
        """Effective ``(m, n)`` weight the three branches add up to."""
        return self.lrmb.dense() + self.smb.dense() + self.bmb.dense()


@dataclass
class FpConvLayer:
    """Full-precision layer; ``weight`` is ``(C_out, C_in*kh*kw)``.

    ``conv=None`` makes it a plain linear layer (only used for layer stacks
    read from checkpoints, never as a toy model head or tail).
    """

    weight: np.ndarray
    bias: np.ndarray
    conv: ConvSpec | None = None

    def __post_init__(self):
        self.weight = as_matrix(self.weight, "weight")
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if len(self.bias) != self.weight.shape[0]:
            raise InvalidParamsError(f"bias has {len(self.bias)} entries, weight has {self.weight.shape[0]} rows")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise InvalidParamsError("non-finite full-precision weights")
        if self.conv is not None and self.m % self.conv.window:
            raise InvalidParamsError(f"in_features {self.m} not divisible by kernel window {self.conv.window}")

    @property
    def m(self) -> int:
        return self.weight.shape[1]

    @property
    def n(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.m if self.conv is None else self.m // self.conv.window

    @property
    def out_channels(self) -> int:
        return self.n


def branch_outputs(l: ThreeBranchLayer, x, backend: str | None = None):
    """The ``(bmb, lrmb, smb)`` outputs of a layer, each shaped like the layer output."""
    tokens, shape = _unfold(l.conv, x, l.m)
    outs = (bmb_forward(l.bmb, tokens, backend), lrmb_forward(l.lrmb, tokens), smb_forward(l.smb, tokens, backend))
    return tuple(_fold(o, shape) for o in outs)


def layer_forward(l, x, backend: str | None = None):
    """Forward one layer: branch sum for three-branch layers, affine map for FP ones."""
    if isinstance(l, FpConvLayer):
        tokens, shape = _unfold(l.conv, x, l.m)
        return _fold(tokens @ l.weight.T + l.bias, shape)
    tokens, shape = _unfold(l.conv, x, l.m)
    out = bmb_forward(l.bmb, tokens, backend) + lrmb_forward(l.lrmb, tokens) + smb_forward(l.smb, tokens, backend)
    return _fold(out, shape)


@dataclass
class ToyModel:
    head: FpConvLayer
    body: list = field(default_factory=list)
    tail: FpConvLayer | None = None
    upsample: int = DEFAULT_UPSAMPLE

    def __post_init__(self):
        if self.tail is None:
            raise InvalidParamsError("toy model needs a tail layer")
        for end in (self.head, self.tail):
            if not isinstance(end, FpConvLayer) or end.conv is None:
                raise InvalidParamsError("head and tail must be full-precision conv layers")
        if self.upsample < 1:
            raise InvalidParamsError("upsample factor must be >= 1")
        chain = self.layers
        for prev, nxt in zip(chain, chain[1:]):
            if prev.out_channels != nxt.in_channels:
                raise InvalidParamsError(f"channel chain broken: {prev.out_channels} -> {nxt.in_channels}")

    @property
    def layers(self) -> list:
        return [self.head, *self.body, self.tail]

    @classmethod
    def from_layers(cls, layers, upsample: int = DEFAULT_UPSAMPLE) -> "ToyModel":
        if len(layers) < 2:
            raise InvalidParamsError("a toy model needs at least a head and a tail layer")
        return cls(layers[0], list(layers[1:-1]), layers[-1], upsample)


def centre_features(h):
    """Split head features into a per-image, per-channel zero-mean part and the mean.

    The body sees zero-mean features (so Sign does not saturate on an offset);
    the mean is added back after the body when the channel counts allow.
    """
    centre = h.mean(axis=(2, 3), keepdims=True)
    # The mean of identical values can be off by an ulp; constant channels must centre to exactly 0.
    lo = h.min(axis=(2, 3), keepdims=True)
    centre = np.where(lo == h.max(axis=(2, 3), keepdims=True), lo, centre)
    return h - centre, centre


def body_step(layer, h, backend: str | None = None):
    y = leaky_relu(layer_forward(layer, h, backend), LEAKY_SLOPE)
    return h + y if y.shape == h.shape else y


def model_forward(model: ToyModel, img, backend: str | None = None) -> np.ndarray:
    img = as_tensor4(img, "image")
    if img.shape[1] != model.head.in_channels:
        raise ShapeError(f"image has {img.shape[1]} channels, model expects {model.head.in_channels}")
    h, centre = centre_features(layer_forward(model.head, img))
    for layer in model.body:
        h = body_step(layer, h, backend)
    if h.shape[1] == centre.shape[1]:
        h = h + centre
    return layer_forward(model.tail, upsample_nearest(h, model.upsample))


def sparsity_k(m: int, n: int, mult: int = DEFAULT_SPARSITY_MULT) -> int:
    return mult * max(m, n)


def compress_layer(fp: FpConvLayer, rank: int = DEFAULT_RANK, k: int | None = None):
    """Decoupled-init a three-branch layer from an FP layer; returns ``(layer, report)``.

    The FP bias has no slot in a three-branch layer and is dropped.
    """
    if k is None:
        k = sparsity_k(fp.m, fp.n)
    lrmb, smb, bmb, report = decoupled_init(fp.weight.T, rank, k)
    return ThreeBranchLayer(lrmb, smb, bmb, fp.conv), report


def direct_layer(fp: FpConvLayer) -> ThreeBranchLayer:
    lrmb, smb, bmb = direct_init(fp.weight.T)
    return ThreeBranchLayer(lrmb, smb, bmb, fp.conv)


def compress_stack(layers, rank: int = DEFAULT_RANK, sparsity_mult: int = DEFAULT_SPARSITY_MULT):
    """Compress a layer stack, keeping the first and last layers FP when there are two or more.

    Returns ``(new_layers, reports)`` with one ``(index, InitReport)`` per compressed layer.
    """
    if rank < 1:
        raise ArgumentError(f"rank must be >= 1, got {rank}")
    if sparsity_mult < 0:
        raise ArgumentError(f"sparsity multiplier must be >= 0, got {sparsity_mult}")
    keep_ends = len(layers) >= 2
    out, reports = [], []
    for i, layer in enumerate(layers):
        if keep_ends and i in (0, len(layers) - 1):
            out.append(layer)
            continue
        if not isinstance(layer, FpConvLayer):
            raise InvalidParamsError(f"layer {i} is already compressed")
        new, report = compress_layer(layer, rank, sparsity_k(layer.m, layer.n, sparsity_mult))
        out.append(new)
        reports.append((i, report))
    return out, reports


def compress_model(teacher: ToyModel, rank: int = DEFAULT_RANK, sparsity_mult: int = DEFAULT_SPARSITY_MULT):
    layers, reports = compress_stack(teacher.layers, rank, sparsity_mult)
    return ToyModel.from_layers(_copy_ends(layers), teacher.upsample), reports


def direct_model(teacher: ToyModel) -> ToyModel:
    """Student whose body is plain binarization of the teacher's body weights."""
    layers = [teacher.head, *(direct_layer(l) for l in teacher.body), teacher.tail]
    return ToyModel.from_layers(_copy_ends(layers), teacher.upsample)


def _copy_ends(layers):
    layers = list(layers)
    for i in (0, -1):
        l = layers[i]
        layers[i] = FpConvLayer(l.weight.copy(), l.bias.copy(), l.conv)
    return layers


def make_toy_teacher(seed: int, channels=TOY_CHANNELS, image_channels: int = 3,
                     upsample: int = DEFAULT_UPSAMPLE) -> ToyModel:
    """Random full-precision toy SR model: He-scaled 3x3 convs, zero body biases.

    ``channels`` lists the body's channel chain; the head maps the image to
    ``channels[0]`` and the tail maps ``channels[-1]`` back to image channels.
    """
    rng = np.random.default_rng(seed)
    conv = ConvSpec(3, 3, 1, 1)

    def fp(c_in, c_out, bias_scale):
        m = c_in * conv.window
        w = rng.standard_normal((c_out, m)) * np.sqrt(2.0 / m)
        return FpConvLayer(w, rng.standard_normal(c_out) * bias_scale, conv)

    head = fp(image_channels, channels[0], 0.01)
    body = [fp(a, b, 0.0) for a, b in zip(channels, channels[1:])]
    tail = fp(channels[-1], image_channels, 0.01)
    return ToyModel(head, body, tail, upsample)
