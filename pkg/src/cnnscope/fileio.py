"""All file formats: the CNNW weight container, PPM/PNG images, TSV reports.

CNNW layout (little-endian throughout):

    magic  4 bytes  "CNNW"
    u32    version, currently 1
    u32    tensor count
    per tensor:
        u32    name length, then that many bytes of UTF-8 name
        u32    dtype code (0 = float32, the only one defined)
        u32    ndim, then ndim x u32 dims
        payload: row-major float32 values

Weight sets store a conv kernel as ``<layer>.weight`` with shape
(out, in, kh, kw) plus ``<layer>.bias`` (out,); fc weights as (out, in);
an optional dataset mean under ``__mean__`` with shape (3,) or (3, H, W).

The reader is strict: sizes must match the payload exactly, trailing bytes
are an error, and every malformed input raises WeightFormatError (images:
ImageFormatError) rather than returning garbage.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from .errors import ImageFormatError, WeightFormatError
from .kernels import ConvWeights, FcWeights

__all__ = [
    "read_tensors",
    "write_tensors",
    "read_weights",
    "write_weights",
    "MEAN_KEY",
    "read_image",
    "write_image",
    "resize_nearest",
    "write_tsv",
    "read_tsv",
    "read_manifest",
    "atomic_write_bytes",
]

WEIGHT_MAGIC = b"CNNW"
WEIGHT_VERSION = 1
MEAN_KEY = "__mean__"

_MAX_NAME = 4096
_MAX_NDIM = 8


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file + rename so failures never leave partial output."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


# ---------------------------------------------------------------------------
# CNNW tensor container
# ---------------------------------------------------------------------------


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Serialize named float32 tensors, in dict order, to a CNNW file."""
    parts = [WEIGHT_MAGIC, struct.pack("<II", WEIGHT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, np.float32)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<II", 0, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise WeightFormatError(
                f"truncated file: needed {n} bytes for {what} at offset {self.pos}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def read_tensors(path) -> dict[str, np.ndarray]:
    """Parse a CNNW file into an ordered name -> float32 array mapping."""
    with open(path, "rb") as f:
        data = f.read()
    cur = _Cursor(data)
    if cur.take(4, "magic") != WEIGHT_MAGIC:
        raise WeightFormatError(f"bad magic, not a CNNW file: {path}")
    version = cur.u32("version")
    if version != WEIGHT_VERSION:
        raise WeightFormatError(f"unsupported CNNW version {version}")
    count = cur.u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        name_len = cur.u32("name length")
        if name_len == 0 or name_len > _MAX_NAME:
            raise WeightFormatError(f"tensor {i}: implausible name length {name_len}")
        try:
            name = cur.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise WeightFormatError(f"tensor {i}: name is not valid UTF-8") from None
        if name in tensors:
            raise WeightFormatError(f"duplicate tensor name {name!r}")
        dtype = cur.u32("dtype")
        if dtype != 0:
            raise WeightFormatError(f"tensor {name!r}: unknown dtype code {dtype}")
        ndim = cur.u32("ndim")
        if ndim == 0 or ndim > _MAX_NDIM:
            raise WeightFormatError(f"tensor {name!r}: implausible ndim {ndim}")
        dims = struct.unpack(f"<{ndim}I", cur.take(4 * ndim, "dims"))
        if any(d == 0 for d in dims):
            raise WeightFormatError(f"tensor {name!r}: zero-sized dim in {dims}")
        total = 1
        for d in dims:
            total *= d
        if 4 * total > len(data) - cur.pos:
            raise WeightFormatError(
                f"tensor {name!r}: dims {dims} overflow the remaining payload"
            )
        payload = cur.take(4 * total, "payload")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
        tensors[name] = arr.astype(np.float32)
    if cur.pos != len(data):
        raise WeightFormatError(
            f"{len(data) - cur.pos} trailing bytes after the last tensor"
        )
    return tensors


def write_weights(path, weights: dict, mean: np.ndarray | None = None) -> None:
    """Write a layer-name -> ConvWeights/FcWeights mapping (plus mean)."""
    tensors: dict[str, np.ndarray] = {}
    for name, w in weights.items():
        if isinstance(w, ConvWeights):
            tensors[f"{name}.weight"] = w.kernels
        elif isinstance(w, FcWeights):
            tensors[f"{name}.weight"] = w.weights
        else:
            raise TypeError(f"layer {name!r}: expected ConvWeights or FcWeights")
        tensors[f"{name}.bias"] = w.bias
    if mean is not None:
        tensors[MEAN_KEY] = np.asarray(mean, np.float32)
    write_tensors(path, tensors)


def read_weights(path) -> tuple[dict, np.ndarray | None]:
    """Inverse of :func:`write_weights`: (weights mapping, mean or None)."""
    tensors = read_tensors(path)
    mean = tensors.pop(MEAN_KEY, None)
    if mean is not None and mean.shape != (3,) and (mean.ndim != 3 or mean.shape[0] != 3):
        raise WeightFormatError(f"mean tensor has unsupported shape {mean.shape}")
    kernels: dict[str, np.ndarray] = {}
    biases: dict[str, np.ndarray] = {}
    order: list[str] = []
    for name, arr in tensors.items():
        if name.endswith(".weight"):
            layer, table = name[:-7], kernels
        elif name.endswith(".bias"):
            layer, table = name[:-5], biases
        else:
            raise WeightFormatError(
                f"tensor {name!r} is neither <layer>.weight nor <layer>.bias"
            )
        if layer in table:
            raise WeightFormatError(f"duplicate entry for layer {layer!r}")
        table[layer] = arr
        if layer not in order:
            order.append(layer)
    weights: dict[str, ConvWeights | FcWeights] = {}
    for layer in order:
        if layer not in kernels or layer not in biases:
            raise WeightFormatError(f"layer {layer!r} is missing its weight or bias")
        w, b = kernels[layer], biases[layer]
        if b.ndim != 1:
            raise WeightFormatError(f"layer {layer!r}: bias must be rank 1, got {b.shape}")
        try:
            if w.ndim == 4:
                weights[layer] = ConvWeights(w, b)
            elif w.ndim == 2:
                weights[layer] = FcWeights(w, b)
            else:
                raise WeightFormatError(
                    f"layer {layer!r}: weight rank {w.ndim} is neither conv (4) nor fc (2)"
                )
        except ValueError as e:
            raise WeightFormatError(f"layer {layer!r}: {e}") from None
    return weights, mean


# ---------------------------------------------------------------------------
# Images: PPM (P6, maxval 255) is the native format; a minimal PNG codec
# (8-bit, no interlace) covers the optional .png path.
# ---------------------------------------------------------------------------


def _ppm_header_tokens(data: bytes):
    # P6 headers are whitespace-separated tokens; '#' comments run to EOL.
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in (10, 13):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("malformed PPM header: ran out of tokens")
        tokens.append(data[start:pos])
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("malformed PPM header: missing raster separator")
    return tokens, pos + 1  # single whitespace byte separates header and raster


def _read_ppm(data: bytes) -> np.ndarray:
    tokens, offset = _ppm_header_tokens(data)
    if tokens[0] != b"P6":
        raise ImageFormatError(f"not a P6 PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError("malformed PPM header: non-numeric dimension") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad PPM dimensions {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM maxval {maxval} (only 255)")
    need = width * height * 3
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise ImageFormatError(
            f"truncated PPM raster: {len(raster)} of {need} bytes"
        )
    arr = np.frombuffer(raster, np.uint8).reshape(height, width, 3)
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def _write_ppm(img: np.ndarray) -> bytes:
    c, h, w = img.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + img.transpose(1, 2, 0).tobytes()


_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _png_chunk(kind: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(kind + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + kind + payload + struct.pack(">I", crc)


def _write_png(img: np.ndarray) -> bytes:
    c, h, w = img.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)  # 8-bit truecolor
    rows = img.transpose(1, 2, 0).tobytes()
    raw = bytearray()
    stride = w * 3
    for r in range(h):
        raw.append(0)  # filter type none
        raw += rows[r * stride:(r + 1) * stride]
    return (_PNG_MAGIC + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", zlib.compress(bytes(raw)))
            + _png_chunk(b"IEND", b""))


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(raw: bytes, h: int, w: int, bpp: int) -> bytearray:
    stride = w * bpp
    if len(raw) != h * (stride + 1):
        raise ImageFormatError("PNG pixel data length mismatch after inflate")
    out = bytearray(h * stride)
    prev_start = None
    for r in range(h):
        ftype = raw[r * (stride + 1)]
        line = bytearray(raw[r * (stride + 1) + 1:(r + 1) * (stride + 1)])
        start = r * stride
        if ftype == 0:
            pass
        elif ftype == 1:  # sub
            for i in range(bpp, stride):
                line[i] = (line[i] + line[i - bpp]) & 0xFF
        elif ftype == 2:  # up
            if prev_start is not None:
                for i in range(stride):
                    line[i] = (line[i] + out[prev_start + i]) & 0xFF
        elif ftype == 3:  # average
            for i in range(stride):
                left = line[i - bpp] if i >= bpp else 0
                up = out[prev_start + i] if prev_start is not None else 0
                line[i] = (line[i] + (left + up) // 2) & 0xFF
        elif ftype == 4:  # paeth
            for i in range(stride):
                left = line[i - bpp] if i >= bpp else 0
                up = out[prev_start + i] if prev_start is not None else 0
                ul = out[prev_start + i - bpp] if (prev_start is not None and i >= bpp) else 0
                line[i] = (line[i] + _paeth(left, up, ul)) & 0xFF
        else:
            raise ImageFormatError(f"PNG row {r}: unknown filter type {ftype}")
        out[start:start + stride] = line
        prev_start = start
    return out


def _read_png(data: bytes) -> np.ndarray:
    if not data.startswith(_PNG_MAGIC):
        raise ImageFormatError("bad PNG signature")
    pos = len(_PNG_MAGIC)
    ihdr = None
    idat = bytearray()
    while pos + 8 <= len(data):
        length, kind = struct.unpack(">I4s", data[pos:pos + 8])
        payload = data[pos + 8:pos + 8 + length]
        if len(payload) < length:
            raise ImageFormatError(f"truncated PNG chunk {kind!r}")
        pos += 12 + length  # skip CRC
        if kind == b"IHDR":
            ihdr = payload
        elif kind == b"IDAT":
            idat += payload
        elif kind == b"IEND":
            break
    if ihdr is None or len(ihdr) != 13:
        raise ImageFormatError("PNG missing IHDR")
    w, h, depth, color, comp, filt, interlace = struct.unpack(">IIBBBBB", ihdr)
    if depth != 8 or interlace != 0 or comp != 0 or filt != 0:
        raise ImageFormatError(
            f"unsupported PNG variant (depth {depth}, interlace {interlace})"
        )
    channels = {0: 1, 2: 3, 6: 4}.get(color)
    if channels is None:
        raise ImageFormatError(f"unsupported PNG color type {color}")
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad PNG dimensions {w}x{h}")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as e:
        raise ImageFormatError(f"PNG inflate failed: {e}") from None
    pixels = _unfilter(raw, h, w, channels)
    arr = np.frombuffer(bytes(pixels), np.uint8).reshape(h, w, channels)
    if channels == 1:
        arr = np.repeat(arr, 3, axis=2)
    elif channels == 4:
        arr = arr[:, :, :3]
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def read_image(path) -> np.ndarray:
    """Load a PPM or PNG file as a (3, H, W) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    if data.startswith(b"P6"):
        return _read_ppm(data)
    if data.startswith(_PNG_MAGIC):
        return _read_png(data)
    raise ImageFormatError(f"unrecognized image format: {path}")


def write_image(path, img: np.ndarray) -> None:
    """Write a (3, H, W) uint8 array as PPM, or PNG when the path ends .png."""
    img = np.ascontiguousarray(img, np.uint8)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"image must be (3, H, W) uint8, got shape {img.shape}")
    if os.fspath(path).lower().endswith(".png"):
        atomic_write_bytes(path, _write_png(img))
    else:
        atomic_write_bytes(path, _write_ppm(img))


def resize_nearest(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a (C, H, W) array."""
    c, h, w = img.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return np.ascontiguousarray(img[:, rows[:, None], cols[None, :]])


# ---------------------------------------------------------------------------
# TSV reports and dataset manifests
# ---------------------------------------------------------------------------


def format_tsv(columns: list[str], rows) -> str:
    lines = ["# " + "\t".join(columns)]
    for row in rows:
        lines.append("\t".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def write_tsv(path, columns: list[str], rows) -> None:
    atomic_write_bytes(path, format_tsv(columns, rows).encode("utf-8"))


def read_tsv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    columns: list[str] = []
    rows: list[list[str]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            if not columns:
                columns = line[1:].lstrip().split("\t")
            continue
        rows.append(line.split("\t"))
    return columns, rows


def read_manifest(path) -> list[tuple[str, str | None]]:
    """Read one image path per line, optional tab-separated label.

    Relative paths resolve against the manifest's own directory.
    """
    base = os.path.dirname(os.path.abspath(os.fspath(path)))
    entries: list[tuple[str, str | None]] = []
    with open(path, encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            img = parts[0]
            if not os.path.isabs(img):
                img = os.path.join(base, img)
            entries.append((img, parts[1] if len(parts) > 1 else None))
    return entries
