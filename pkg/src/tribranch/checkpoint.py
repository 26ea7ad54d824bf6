"""FPW0 / BMC1 binary checkpoint formats (all fields little-endian).

FPW0 (full-precision stack)::

    "FPW0" u32 n_layers
    per layer: u8 kind (0 linear, 1 conv) u32 m u32 n [u8 kh kw pad stride if conv]
               f32 weight[n][m]  (out-major, i.e. FpConvLayer.weight row-major)
               f32 bias[n]

BMC1 (compressed stack)::

    "BMC1" u32 n_layers
    kind 0/1 (three-branch linear/conv): u32 m u32 n [conv bytes] u32 r
        f32 B[m][r] f32 A[r][n] u32 k {u32 row u32 col f32 value}*k
        u64 packed[n][ceil(m/64)] f32 k_vec[n]
    kind 2 (FP conv) / kind 3 (FP linear): u32 m u32 n [conv bytes if 2]
        f32 weight[n][m] f32 bias[n]

Reals are widened to float64 on read and narrowed on write, so
parse-then-serialize is byte-identical.
"""

import struct

import numpy as np

from .bitcore import BitMatrix, words_per_row
from .branches import BmbParams, LrmbParams, SmbParams
from .errors import FormatError, TribranchError
from .layer import ConvSpec, FpConvLayer, ThreeBranchLayer

FPW_MAGIC = b"FPW0"
BMC_MAGIC = b"BMC1"

KIND_LINEAR = 0
KIND_CONV = 1
KIND_FP_CONV = 2
KIND_FP_LINEAR = 3


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise FormatError(f"truncated file: need {size} bytes, {len(self.data) - self.pos} left", self.pos)
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def u8(self) -> int:
        return self.unpack("B")[0]

    def u32(self) -> int:
        return self.unpack("I")[0]

    def array(self, dtype: str, count: int, shape=None) -> np.ndarray:
        dt = np.dtype(dtype)
        arr = np.frombuffer(self.take(dt.itemsize * count), dtype=dt)
        arr = arr.astype(np.float64) if dt.kind == "f" else arr.astype(dt.newbyteorder("="))
        return arr.reshape(shape) if shape is not None else arr

    def end(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes", self.pos)


def _f32(a) -> bytes:
    return np.asarray(a, dtype="<f4").tobytes()


def _conv_bytes(conv: ConvSpec) -> bytes:
    return struct.pack("<4B", conv.kh, conv.kw, conv.pad, conv.stride)


def _read_conv(r: _Reader) -> ConvSpec:
    at = r.pos
    kh, kw, pad, stride = r.unpack("4B")
    try:
        return ConvSpec(kh, kw, pad, stride)
    except TribranchError as exc:
        raise FormatError(str(exc), at) from None


def _read_magic(r: _Reader, magic: bytes):
    got = r.take(4) if len(r.data) >= 4 else r.data
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", 0)


def _read_fp(r: _Reader, is_conv: bool) -> FpConvLayer:
    at = r.pos
    m, n = r.u32(), r.u32()
    conv = _read_conv(r) if is_conv else None
    weight = r.array("<f4", m * n, (n, m))
    bias = r.array("<f4", n)
    try:
        return FpConvLayer(weight, bias, conv)
    except TribranchError as exc:
        raise FormatError(f"invalid FP layer: {exc}", at) from None


def _write_fp_body(layer: FpConvLayer) -> bytes:
    out = struct.pack("<II", layer.m, layer.n)
    if layer.conv is not None:
        out += _conv_bytes(layer.conv)
    return out + _f32(layer.weight) + _f32(layer.bias)


# --- FPW0 -----------------------------------------------------------------

def serialize_fpw(layers) -> bytes:
    parts = [FPW_MAGIC, struct.pack("<I", len(layers))]
    for layer in layers:
        if not isinstance(layer, FpConvLayer):
            raise TypeError("FPW0 holds full-precision layers only")
        parts.append(struct.pack("<B", KIND_LINEAR if layer.conv is None else KIND_CONV))
        parts.append(_write_fp_body(layer))
    return b"".join(parts)


def parse_fpw(data: bytes) -> list[FpConvLayer]:
    r = _Reader(data)
    _read_magic(r, FPW_MAGIC)
    layers = []
    for _ in range(r.u32()):
        at = r.pos
        kind = r.u8()
        if kind not in (KIND_LINEAR, KIND_CONV):
            raise FormatError(f"unknown FPW0 layer kind {kind}", at)
        layers.append(_read_fp(r, kind == KIND_CONV))
    r.end()
    return layers


# --- BMC1 -----------------------------------------------------------------

def _write_three_branch(layer: ThreeBranchLayer) -> bytes:
    m, n = layer.m, layer.n
    parts = [struct.pack("<BII", KIND_LINEAR if layer.conv is None else KIND_CONV, m, n)]
    if layer.conv is not None:
        parts.append(_conv_bytes(layer.conv))
    parts.append(struct.pack("<I", layer.lrmb.rank))
    parts += [_f32(layer.lrmb.b_mat), _f32(layer.lrmb.a_mat)]
    smb = layer.smb
    parts.append(struct.pack("<I", smb.k))
    triples = np.empty(smb.k, dtype=[("row", "<u4"), ("col", "<u4"), ("value", "<f4")])
    triples["row"], triples["col"], triples["value"] = smb.rows, smb.cols, smb.values
    parts.append(triples.tobytes())
    parts.append(layer.bmb.packed.words.astype("<u8").tobytes())
    parts.append(_f32(layer.bmb.k_vec))
    return b"".join(parts)


def _read_three_branch(r: _Reader, kind: int) -> ThreeBranchLayer:
    at = r.pos
    m, n = r.u32(), r.u32()
    conv = _read_conv(r) if kind == KIND_CONV else None
    rank = r.u32()
    b_mat = r.array("<f4", m * rank, (m, rank))
    a_mat = r.array("<f4", rank * n, (rank, n))
    k = r.u32()
    triples = np.frombuffer(r.take(12 * k), dtype=[("row", "<u4"), ("col", "<u4"), ("value", "<f4")])
    words = r.array("<u8", n * words_per_row(m), (n, words_per_row(m)))
    k_vec = r.array("<f4", n)
    try:
        lrmb = LrmbParams(b_mat, a_mat)
        smb = SmbParams(m, n, triples["row"], triples["col"], triples["value"].astype(np.float64))
        bmb = BmbParams(BitMatrix(n, m, np.ascontiguousarray(words)), k_vec)
        return ThreeBranchLayer(lrmb, smb, bmb, conv)
    except TribranchError as exc:
        raise FormatError(f"invalid three-branch layer: {exc}", at) from None


def serialize_bmc(layers) -> bytes:
    parts = [BMC_MAGIC, struct.pack("<I", len(layers))]
    for layer in layers:
        if isinstance(layer, ThreeBranchLayer):
            parts.append(_write_three_branch(layer))
        else:
            parts.append(struct.pack("<B", KIND_FP_LINEAR if layer.conv is None else KIND_FP_CONV))
            parts.append(_write_fp_body(layer))
    return b"".join(parts)


def parse_bmc(data: bytes) -> list:
    r = _Reader(data)
    _read_magic(r, BMC_MAGIC)
    layers = []
    for _ in range(r.u32()):
        at = r.pos
        kind = r.u8()
        if kind in (KIND_LINEAR, KIND_CONV):
            layers.append(_read_three_branch(r, kind))
        elif kind in (KIND_FP_CONV, KIND_FP_LINEAR):
            layers.append(_read_fp(r, kind == KIND_FP_CONV))
        else:
            raise FormatError(f"unknown BMC1 layer kind {kind}", at)
    r.end()
    return layers


def read_fpw(path) -> list[FpConvLayer]:
    with open(path, "rb") as f:
        return parse_fpw(f.read())


def write_fpw(path, layers) -> None:
    with open(path, "wb") as f:
        f.write(serialize_fpw(layers))


def read_bmc(path) -> list:
    with open(path, "rb") as f:
        return parse_bmc(f.read())


def write_bmc(path, layers) -> None:
    with open(path, "wb") as f:
        f.write(serialize_bmc(layers))
