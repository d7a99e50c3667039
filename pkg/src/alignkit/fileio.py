"""Text-first interchange formats.

MatrixFile: line 1 the literal token MTX1, line 2 "rows cols", then one
line of space-separated decimal reals per row (repr precision, so parsing
reproduces every value exactly), then optional '#' metadata lines.

ImageFile: PGM, ascii P2 or binary P5, 8- or 16-bit (big-endian raw for
16-bit), intensities normalized to [0, 1] on load.

CSV: a header row first, then optional '# key=value' metadata lines, then
data rows.  All writes go through a write-temp-then-rename step.
"""

from __future__ import annotations

import csv
import io
import os
from pathlib import Path

import numpy as np

from .errors import DataError
from .image import Image

MATRIX_MAGIC = "MTX1"


def fmt(value) -> str:
    """Full round-trip decimal text for a scalar."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_matrix(path, matrix, metadata=()) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if m.ndim != 2:
        raise ValueError("matrix must be 2-D")
    lines = [MATRIX_MAGIC, f"{m.shape[0]} {m.shape[1]}"]
    for row in m:
        lines.append(" ".join(fmt(v) for v in row))
    for entry in metadata:
        lines.append(f"# {entry}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_matrix(path, with_metadata: bool = False):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MATRIX_MAGIC:
        raise DataError(f"{path}: line 1: expected magic token {MATRIX_MAGIC}")
    try:
        rows, cols = (int(tok) for tok in lines[1].split())
    except (IndexError, ValueError):
        raise DataError(f"{path}: line 2: expected 'rows cols'") from None
    if rows < 1 or cols < 1:
        raise DataError(f"{path}: line 2: non-positive matrix shape")
    if len(lines) < 2 + rows:
        raise DataError(f"{path}: expected {rows} data rows, found {len(lines) - 2}")
    out = np.empty((rows, cols))
    for r in range(rows):
        line_no = 3 + r
        parts = lines[2 + r].split()
        if len(parts) != cols:
            raise DataError(f"{path}: line {line_no}: expected {cols} values, got {len(parts)}")
        try:
            out[r] = [float(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"{path}: line {line_no}: {exc}") from None
    metadata = []
    for extra_no, line in enumerate(lines[2 + rows :], start=3 + rows):
        if not line.strip():
            continue
        if not line.startswith("#"):
            raise DataError(f"{path}: line {extra_no}: unexpected trailing content")
        metadata.append(line[1:].strip())
    if with_metadata:
        return out, metadata
    return out


def save_pgm(path, image: Image, maxval: int = 255, binary: bool = True) -> None:
    """Quantize to [0, maxval] and write P5 (binary) or P2 (ascii)."""
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    arr = np.clip(image.intensities, 0.0, 1.0)
    quant = np.rint(arr * maxval).astype(np.uint32)
    h, w = arr.shape
    if binary:
        header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
        dtype = ">u2" if maxval > 255 else "u1"
        atomic_write_bytes(path, header + quant.astype(dtype).tobytes())
    else:
        lines = ["P2", f"{w} {h}", str(maxval)]
        lines.extend(" ".join(str(v) for v in row) for row in quant)
        atomic_write_text(path, "\n".join(lines) + "\n")


def _pgm_tokens(data: bytes, count: int):
    """First `count` whitespace-separated header tokens, honoring # comments.

    Returns (tokens, offset of the byte right after the single whitespace
    that terminates the last token).
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DataError("truncated PGM header")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos : pos + 1].isspace():
        raise DataError("PGM header must end with a whitespace byte")
    return tokens, pos + 1


def load_pgm(path) -> Image:
    data = Path(path).read_bytes()
    if data[:2] not in (b"P2", b"P5"):
        raise DataError(f"{path}: not a P2/P5 PGM file")
    binary = data[:2] == b"P5"
    try:
        tokens, offset = _pgm_tokens(data, 4)
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except (DataError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if w < 1 or h < 1 or not (0 < maxval < 65536):
        raise DataError(f"{path}: invalid PGM dimensions or maxval")
    if binary:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = w * h * dtype.itemsize
        raster = data[offset : offset + need]
        if len(raster) != need:
            raise DataError(f"{path}: expected {need} raster bytes, found {len(raster)}")
        values = np.frombuffer(raster, dtype=dtype).reshape(h, w)
    else:
        try:
            flat = [int(t) for t in data[offset:].split()]
        except ValueError:
            raise DataError(f"{path}: non-integer ascii sample") from None
        if len(flat) != w * h:
            raise DataError(f"{path}: expected {w * h} samples, found {len(flat)}")
        values = np.array(flat).reshape(h, w)
    if values.max(initial=0) > maxval:
        raise DataError(f"{path}: sample exceeds maxval")
    return Image(values.astype(np.float64) / maxval)


def write_csv(path, header, rows, metadata=()) -> None:
    """Header row, '# key=value' metadata lines, then data rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for entry in metadata:
        buf.write(f"# {entry}\n")
    for row in rows:
        writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path):
    """Returns (header, rows of str, metadata list)."""
    header = None
    metadata = []
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                metadata.append(line[1:].strip())
                continue
            parsed = next(csv.reader([line]))
            if header is None:
                header = parsed
            elif parsed:
                rows.append(parsed)
    if header is None:
        raise DataError(f"{path}: empty CSV")
    return header, rows, metadata
