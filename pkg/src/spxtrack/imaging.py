"""Frames, masks and sequences; PPM/PNG reading and label-map emission."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    """Raised for unreadable, unsupported or malformed image files."""


@dataclass(frozen=True)
class Frame:
    """RGB raster, ``data`` is a (height, width, 3) uint8 array."""

    data: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.uint8)
        if d.ndim != 3 or d.shape[2] != 3 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"frame data must be (H, W, 3) with H, W >= 1, got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class RoiMask:
    bits: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise ValueError("mask bits must be 2-D")
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass
class Sequence:
    frames: list
    ref_index: int = 0
    names: list = field(default_factory=list)

    def __post_init__(self):
        if not self.frames:
            raise ValueError("empty sequence")
        shape = self.frames[0].data.shape
        for i, f in enumerate(self.frames):
            if f.data.shape != shape:
                raise ValueError(f"frame {i} has shape {f.data.shape}, expected {shape}")
        if not 0 <= self.ref_index < len(self.frames):
            raise ValueError(f"ref_index {self.ref_index} outside [0, {len(self.frames) - 1}]")
        if not self.names:
            self.names = [f"{i:05d}" for i in range(len(self.frames))]
        if len(self.names) != len(self.frames):
            raise ValueError("one name per frame required")

    def __len__(self):
        return len(self.frames)

    @property
    def N(self) -> int:
        return len(self.frames) - 1


# ---------------------------------------------------------------- netpbm

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def _read_pnm(raw: bytes, path) -> np.ndarray:
    magic = raw[:2]
    if magic not in (b"P6", b"P5"):
        raise ImageFormatError(f"{path}: unsupported netpbm variant {magic!r}")
    pos = 2
    vals = []
    for _ in range(3):
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise ImageFormatError(f"{path}: truncated header")
        try:
            vals.append(int(m.group(1)))
        except ValueError:
            raise ImageFormatError(f"{path}: bad header token {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = vals
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: bad dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    channels = 3 if magic == b"P6" else 1
    payload = raw[pos:]
    expected = width * height * channels
    if len(payload) != expected:
        raise ImageFormatError(
            f"{path}: dimension mismatch, header says {width}x{height} "
            f"({expected} bytes) but payload has {len(payload)} bytes"
        )
    arr = np.frombuffer(payload, dtype=np.uint8)
    return arr.reshape(height, width, channels) if channels == 3 else arr.reshape(height, width)


def _read_any(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"{path}: unreadable ({exc.strerror})") from exc
    if raw[:2] in (b"P6", b"P5"):
        return _read_pnm(raw, path)
    if raw[:8] != b"\x89PNG\r\n\x1a\n":
        raise ImageFormatError(f"{path}: unsupported format")
    with Image.open(path) as im:
        if im.mode in ("RGB", "L"):
            return np.asarray(im).copy()
        if im.mode == "RGBA":
            return np.asarray(im)[..., :3].copy()
        if im.mode == "LA":
            return np.asarray(im)[..., 0].copy()
        if im.mode == "P":
            return np.asarray(im.convert("RGB")).copy()
        if im.mode == "1":
            return (np.asarray(im).astype(np.uint8) * 255)
        raise ImageFormatError(f"{path}: unsupported PNG mode {im.mode}")


def load_frame(path) -> Frame:
    arr = _read_any(path)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    return Frame(arr)


def save_frame(frame: Frame, path) -> None:
    """Write P6 for ``.ppm`` paths, PNG otherwise."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
        path.write_bytes(header + frame.data.tobytes())
    else:
        Image.fromarray(frame.data, "RGB").save(path, format="PNG")


def load_mask(path, threshold: int = 128) -> RoiMask:
    arr = _read_any(path)
    if arr.ndim == 3:
        arr = arr[..., 0]
    return RoiMask(arr >= threshold)


def save_mask(mask: RoiMask, path) -> None:
    img = Image.fromarray(mask.bits.astype(np.uint8) * 255, "L")
    img.save(Path(path), format="PNG")


def write_label_map(seg, path) -> None:
    """16-bit PNG of superpixel indexes plus a ``.txt`` sidecar of centroids and sizes."""
    if seg.count > 65535:
        raise ValueError(f"{seg.count} superpixels exceed the 16-bit label format")
    path = Path(path)
    img = Image.fromarray(seg.labels.astype(np.uint16))
    img.save(path, format="PNG")
    lines = ["# index x y size"]
    for i, ((cx, cy), size) in enumerate(zip(seg.centroids, seg.sizes)):
        lines.append(f"{i} {float(cx)!r} {float(cy)!r} {int(size)}")
    path.with_suffix(".txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_label_map(path) -> np.ndarray:
    try:
        with Image.open(Path(path)) as im:
            arr = np.asarray(im)
    except OSError as exc:
        raise ImageFormatError(f"{path}: unreadable label map") from exc
    return arr.astype(np.int32)
