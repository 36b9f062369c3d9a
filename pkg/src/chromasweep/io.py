"""Little-endian container formats for cubes (HSC1), focal stacks (FST1) and PSFs (PSF1).

Layouts::

    HSC1: magic | u32 H, W, C | u32 meta_len | meta | f64[C] wavelengths | f32 data (C, H, W)
    FST1: magic | u32 H, W, N | u32 meta_len | meta | f64[N] positions   | f32 data (N, H, W)
    PSF1: magic | u32 N, C, K | f64[N] positions | f64[C] wavelengths    | f32 kernels (N, C, K, K)

``meta`` is UTF-8 ``key=value`` lines. Values are stored as float32, so a
round trip is bit-exact only for float32-representable data.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import FocalStack, HyperspectralCube, PsfStack

CUBE_MAGIC = b"HSC1"
STACK_MAGIC = b"FST1"
PSF_MAGIC = b"PSF1"


class FormatError(ValueError):
    """Malformed or truncated container file."""


def encode_metadata(meta: dict) -> bytes:
    lines = []
    for k, v in meta.items():
        k, v = str(k), str(v)
        if "=" in k or "\n" in k or "\n" in v:
            raise ValueError(f"metadata entry {k!r} cannot contain '=' in the key or newlines")
        lines.append(f"{k}={v}")
    return "\n".join(lines).encode("utf-8")


def decode_metadata(raw: bytes) -> dict:
    meta = {}
    for line in raw.decode("utf-8").splitlines():
        if not line:
            continue
        k, _, v = line.partition("=")
        meta[k] = v
    return meta


class _Reader:
    def __init__(self, buf: bytes, name: str):
        self.buf = buf
        self.pos = 0
        self.name = name

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.name}: truncated at byte offset {len(self.buf)} while reading {what} "
                f"(needed {n} bytes at offset {self.pos})"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, count: int, what: str) -> tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count, what))

    def f64(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)

    def f32(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(4 * count, what), dtype="<f4").astype(np.float64)

    def finish(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(f"{self.name}: {len(self.buf) - self.pos} trailing bytes at offset {self.pos}")


def _image_bytes(magic, dims, meta, axis_values, data) -> bytes:
    meta_raw = encode_metadata(meta)
    parts = [
        magic,
        struct.pack("<3I", *dims),
        struct.pack("<I", len(meta_raw)),
        meta_raw,
        np.asarray(axis_values, dtype="<f8").tobytes(),
        np.ascontiguousarray(data, dtype="<f4").tobytes(),
    ]
    return b"".join(parts)


def cube_to_bytes(cube: HyperspectralCube, meta: dict | None = None) -> bytes:
    return _image_bytes(
        CUBE_MAGIC, (cube.height, cube.width, cube.channels), meta or {}, cube.wavelengths_nm, cube.data
    )


def stack_to_bytes(stack: FocalStack) -> bytes:
    return _image_bytes(
        STACK_MAGIC, (stack.height, stack.width, stack.count), stack.metadata, stack.lens_positions_mm, stack.data
    )


def psfs_to_bytes(psfs: PsfStack) -> bytes:
    return b"".join(
        [
            PSF_MAGIC,
            struct.pack("<3I", psfs.count, psfs.channels, psfs.kernel_size),
            np.asarray(psfs.lens_positions_mm, dtype="<f8").tobytes(),
            np.asarray(psfs.wavelengths_nm, dtype="<f8").tobytes(),
            np.ascontiguousarray(psfs.kernels, dtype="<f4").tobytes(),
        ]
    )


@dataclass
class ImageFile:
    magic: str
    dims: tuple[int, int, int]
    metadata: dict
    axis_values: np.ndarray
    data: np.ndarray


def _parse_image(buf: bytes, name: str, expect: bytes | None = None) -> ImageFile:
    r = _Reader(buf, name)
    magic = r.take(4, "magic")
    if magic not in (CUBE_MAGIC, STACK_MAGIC) or (expect is not None and magic != expect):
        raise FormatError(f"{name}: unexpected magic {magic!r} at byte offset 0")
    h, w, planes = r.u32(3, "dimensions")
    (meta_len,) = r.u32(1, "metadata length")
    try:
        meta = decode_metadata(r.take(meta_len, "metadata"))
    except UnicodeDecodeError as exc:
        raise FormatError(f"{name}: metadata is not valid UTF-8 (offset {16 + exc.start})") from None
    axis = r.f64(planes, "axis values")
    data = r.f32(planes * h * w, "pixel data").reshape(planes, h, w)
    r.finish()
    return ImageFile(magic.decode(), (h, w, planes), meta, axis, data)


def _parse_psf(buf: bytes, name: str) -> PsfStack:
    r = _Reader(buf, name)
    magic = r.take(4, "magic")
    if magic != PSF_MAGIC:
        raise FormatError(f"{name}: unexpected magic {magic!r} at byte offset 0")
    n, c, k = r.u32(3, "dimensions")
    positions = r.f64(n, "lens positions")
    wavelengths = r.f64(c, "wavelengths")
    kernels = r.f32(n * c * k * k, "kernels").reshape(n, c, k, k)
    r.finish()
    return PsfStack(kernels, positions, wavelengths)


def cube_from_bytes(buf: bytes, name: str = "<cube>") -> tuple[HyperspectralCube, dict]:
    img = _parse_image(buf, name, CUBE_MAGIC)
    return HyperspectralCube(img.data, img.axis_values), img.metadata


def stack_from_bytes(buf: bytes, name: str = "<stack>") -> FocalStack:
    img = _parse_image(buf, name, STACK_MAGIC)
    return FocalStack(img.data, img.axis_values, img.metadata)


def psfs_from_bytes(buf: bytes, name: str = "<psfs>") -> PsfStack:
    return _parse_psf(buf, name)


def _read(path) -> tuple[bytes, str]:
    path = Path(path)
    try:
        return path.read_bytes(), str(path)
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror}") from None


def write_cube(path, cube: HyperspectralCube, meta: dict | None = None) -> None:
    Path(path).write_bytes(cube_to_bytes(cube, meta))


def read_cube(path) -> tuple[HyperspectralCube, dict]:
    return cube_from_bytes(*_read(path))


def write_stack(path, stack: FocalStack) -> None:
    Path(path).write_bytes(stack_to_bytes(stack))


def read_stack(path) -> FocalStack:
    return stack_from_bytes(*_read(path))


def write_psfs(path, psfs: PsfStack) -> None:
    Path(path).write_bytes(psfs_to_bytes(psfs))


def read_psfs(path) -> PsfStack:
    return psfs_from_bytes(*_read(path))


def read_any(path):
    """Parse any of the three formats, dispatching on the magic bytes."""
    buf, name = _read(path)
    if len(buf) < 4:
        raise FormatError(f"{name}: truncated at byte offset {len(buf)} while reading magic")
    magic = buf[:4]
    if magic == PSF_MAGIC:
        return _parse_psf(buf, name)
    if magic in (CUBE_MAGIC, STACK_MAGIC):
        return _parse_image(buf, name)
    raise FormatError(f"{name}: unknown magic {magic!r} at byte offset 0")


def normalize_kernels(raw: np.ndarray, background: float = 0.0) -> np.ndarray:
    """Background-subtract measured kernels, clip at zero and normalize each to sum 1."""
    k = np.clip(np.asarray(raw, dtype=np.float64) - background, 0.0, None)
    sums = k.sum(axis=(-2, -1), keepdims=True)
    if np.any(sums <= 0):
        raise ValueError("a kernel has no energy left after background subtraction")
    return k / sums


def write_ppm(path, rgb: np.ndarray) -> None:
    """Binary P6 portable pixmap, 8-bit, from an ``(H, W, 3)`` array in [0, 1]."""
    img = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = img.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_ppm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while buf[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not buf[pos : pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(buf[pos + 1 :], dtype=np.uint8)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0
