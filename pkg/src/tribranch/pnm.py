"""Binary PGM (P5) and PPM (P6) images with maxval 255."""

import re

import numpy as np

from .errors import FormatError

_CHANNELS = {b"P5": 1, b"P6": 3}
_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def parse_pnm(data: bytes) -> np.ndarray:
    """Decode to a uint8 array of shape ``(channels, height, width)``."""
    magic = data[:2]
    if magic not in _CHANNELS:
        raise FormatError(f"unsupported image magic {magic!r}; need P5 or P6", 0)
    pos, fields = 2, []
    for _ in range(3):
        match = _TOKEN.match(data, pos)
        if match is None:
            raise FormatError("truncated image header", pos)
        try:
            fields.append(int(match.group(1)))
        except ValueError:
            raise FormatError(f"bad header field {match.group(1)!r}", match.start(1)) from None
        pos = match.end()
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}", pos)
    if width < 1 or height < 1:
        raise FormatError(f"bad image size {width}x{height}", pos)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after header", pos)
    pos += 1
    c = _CHANNELS[magic]
    need = width * height * c
    if len(data) - pos < need:
        raise FormatError(f"truncated pixel data: need {need} bytes, have {len(data) - pos}", pos)
    pixels = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return pixels.reshape(height, width, c).transpose(2, 0, 1).copy()


def serialize_pnm(img: np.ndarray) -> bytes:
    c, h, w = img.shape
    magic = {1: b"P5", 3: b"P6"}.get(c)
    if magic is None:
        raise FormatError(f"cannot write {c}-channel image as PNM")
    header = magic + b"\n%d %d\n255\n" % (w, h)
    return header + np.ascontiguousarray(img.transpose(1, 2, 0), dtype=np.uint8).tobytes()


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return parse_pnm(f.read())


def write_pnm(path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(serialize_pnm(img))


def to_tensor(img: np.ndarray) -> np.ndarray:
    """uint8 ``(c, h, w)`` -> float64 ``(1, c, h, w)`` in [0, 1]."""
    return img[None].astype(np.float64) / 255.0


def from_tensor(x: np.ndarray) -> np.ndarray:
    """First image of a ``(n, c, h, w)`` batch in [0, 1] -> clamped, rounded uint8."""
    return np.clip(np.rint(x[0] * 255.0), 0, 255).astype(np.uint8)
