"""File formats: 16-bit PGM/PPM, the BSR1 float32 planar binary, motion records.

BSR1 layout (little-endian): 4-byte magic ``b"BSR1"``, u32 width, u32 height,
u32 channels, then ``channels * height * width`` float32 values, planar.
"""
from __future__ import annotations

import json
import re
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, FileFormatError
from .forward import AffineMotion
from .image import as_planar

BSR_MAGIC = b"BSR1"
MAXVAL = 65535


def quantize16(arr: np.ndarray, white: float = 1.0) -> np.ndarray:
    """Round values to the 16-bit grid used by the PGM/PPM writers."""
    codes = np.clip(np.round(np.asarray(arr) / white * MAXVAL), 0, MAXVAL)
    return codes / MAXVAL * white


def _read_token(buf: bytes, pos: int, comments: list) -> Tuple[bytes, int]:
    while True:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            end = buf.find(b"\n", pos)
            end = len(buf) if end < 0 else end
            comments.append(buf[pos + 1 : end].decode("ascii", "replace").strip())
            pos = end + 1
            continue
        break
    start = pos
    while pos < len(buf) and not buf[pos : pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def read_netpbm(path) -> Tuple[np.ndarray, float]:
    """Read a binary PGM (P5) or PPM (P6) file.

    Returns ``(image, white)`` with the image scaled to ``[0, white]`` in
    ``(C, H, W)`` layout.  The white level comes from a ``# white <value>``
    header comment and defaults to 1.
    """
    buf = Path(path).read_bytes()
    comments: list = []
    magic, pos = _read_token(buf, 0, comments)
    if magic not in (b"P5", b"P6"):
        raise FileFormatError(f"{path}: not a binary PGM/PPM file")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos, comments)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FileFormatError(f"{path}: bad header field {tok!r}") from None
    width, height, maxval = fields
    if not 0 < maxval <= MAXVAL:
        raise FileFormatError(f"{path}: bad maxval {maxval}")
    pos += 1
    channels = 3 if magic == b"P6" else 1
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height * channels
    if len(buf) - pos < count * np.dtype(dtype).itemsize:
        raise FileFormatError(f"{path}: truncated pixel data")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    img = data.reshape(height, width, channels).transpose(2, 0, 1).astype(np.float64)
    white = 1.0
    for c in comments:
        m = re.match(r"white\s+(\S+)", c)
        if m:
            white = float(m.group(1))
    return img / maxval * white, white


def write_netpbm(path, img, white: float = 1.0) -> None:
    """Write a 16-bit PGM (1 channel) or PPM (3 channels)."""
    arr = as_planar(img)
    c, h, w = arr.shape
    if c not in (1, 3):
        raise ConfigError(f"cannot write {c}-channel image as PGM/PPM")
    magic = "P5" if c == 1 else "P6"
    codes = np.clip(np.round(arr / white * MAXVAL), 0, MAXVAL).astype(">u2")
    header = f"{magic}\n# white {white!r}\n{w} {h}\n{MAXVAL}\n".encode("ascii")
    Path(path).write_bytes(header + codes.transpose(1, 2, 0).tobytes())


def write_bsr(path, img) -> None:
    arr = as_planar(img)
    c, h, w = arr.shape
    header = BSR_MAGIC + struct.pack("<III", w, h, c)
    Path(path).write_bytes(header + arr.astype("<f4").tobytes())


def read_bsr(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 16 or buf[:4] != BSR_MAGIC:
        raise FileFormatError(f"{path}: bad BSR magic")
    w, h, c = struct.unpack("<III", buf[4:16])
    if len(buf) - 16 < 4 * w * h * c:
        raise FileFormatError(f"{path}: truncated BSR data")
    data = np.frombuffer(buf, dtype="<f4", count=w * h * c, offset=16)
    return data.reshape(c, h, w).astype(np.float64)


def write_motions(path, motions: Sequence[Optional[AffineMotion]]) -> None:
    """One JSON list of six floats per line; ``null`` for excluded frames."""
    lines = [json.dumps(None if p is None else p.to_record()) for p in motions]
    Path(path).write_text("\n".join(lines) + "\n")


def read_motions(path) -> List[Optional[AffineMotion]]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{path}: bad motion record {line!r}") from exc
        out.append(None if rec is None else AffineMotion.from_record(rec))
    return out


def parse_kv(text: str) -> Dict[str, str]:
    """Parse ``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"([A-Za-z_][\w.-]*)\s*[=:]\s*(.*)$", line)
        if not m:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        out[m.group(1)] = m.group(2).strip()
    return out


def format_kv(items: Dict[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())
