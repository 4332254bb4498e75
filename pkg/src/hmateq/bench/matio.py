"""Matrix file I/O: coordinate text files and a raw binary layout.

The text format is the widespread coordinate interchange format (banner
line, optional % comments, size line, one entry per line, 1-based indices);
real and integer fields with general or symmetric storage are accepted.
The reader is written by hand because its error contract carries 1-based
line numbers, which library readers do not preserve.

The binary layout is: 8-byte magic ``HMATRAW1``, rows and cols as
little-endian uint32 (16 header bytes total), then rows*cols float64
values, little-endian, in row order.
"""

import struct

import numpy as np
import scipy.sparse

from ..errors import DimensionOverflow, ParseError

RAW_MAGIC = b"HMATRAW1"
FORMATS = ("matrix-market", "raw-binary")

# beyond this, index arrays alone exceed any sane benchmark input
_MAX_ELEMENTS = 2**40


def infer_format(path):
    """Map a file suffix to a format name (.mtx/.mm text, anything else raw)."""
    name = str(path).lower()
    return "matrix-market" if name.endswith((".mtx", ".mm")) else "raw-binary"


def _check_format(fmt):
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")


def load_matrix(path, format="matrix-market"):
    """Read a matrix file: sparse for the text format, dense for binary."""
    _check_format(format)
    if format == "matrix-market":
        return _load_mm(path)
    return _load_raw(path)


def save_matrix(m, path, format="matrix-market"):
    """Write a sparse or dense matrix; the text route keeps full precision."""
    _check_format(format)
    if format == "matrix-market":
        _save_mm(m, path)
    else:
        _save_raw(m, path)


def _load_mm(path):
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise ParseError("missing %%MatrixMarket banner", line=1)
    fields = lines[0].lower().split()
    if len(fields) != 5 or fields[1] != "matrix":
        raise ParseError("banner must name a matrix with four attributes", line=1)
    _, _, layout, field, symmetry = fields
    if layout != "coordinate":
        raise ParseError(f"unsupported layout {layout!r}", line=1)
    if field not in ("real", "integer"):
        raise ParseError(f"unsupported field {field!r}", line=1)
    if symmetry not in ("general", "symmetric"):
        raise ParseError(f"unsupported symmetry {symmetry!r}", line=1)

    no = 1
    for no, text in enumerate(lines[1:], start=2):
        stripped = text.strip()
        if stripped and not stripped.startswith("%"):
            break
    else:
        raise ParseError("missing size line", line=no)
    parts = stripped.split()
    if len(parts) != 3:
        raise ParseError("size line must hold rows, cols and entry count", line=no)
    try:
        rows, cols, nnz = (int(p) for p in parts)
    except ValueError:
        raise ParseError("size line must hold three integers", line=no) from None
    if rows < 0 or cols < 0 or nnz < 0:
        raise ParseError("sizes must be nonnegative", line=no)
    if rows * cols > _MAX_ELEMENTS:
        raise DimensionOverflow(f"{rows} x {cols} entries declared")
    if nnz > rows * cols:
        raise ParseError(f"{nnz} entries declared for a {rows} x {cols} matrix",
                         line=no)

    ii, jj, vv = [], [], []
    seen = 0
    for no, text in enumerate(lines[no:], start=no + 1):
        stripped = text.strip()
        if not stripped or stripped.startswith("%"):
            continue
        if seen == nnz:
            raise ParseError("more entries than declared", line=no)
        parts = stripped.split()
        if len(parts) != 3:
            raise ParseError("entry lines hold row, col and value", line=no)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("malformed entry", line=no) from None
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise ParseError(f"index ({i}, {j}) outside {rows} x {cols}", line=no)
        ii.append(i - 1)
        jj.append(j - 1)
        vv.append(v)
        seen += 1
        if symmetry == "symmetric" and i != j:
            ii.append(j - 1)
            jj.append(i - 1)
            vv.append(v)
    if seen != nnz:
        raise ParseError(f"expected {nnz} entries, found {seen}", line=len(lines))
    return scipy.sparse.csr_matrix(
        (vv, (ii, jj)), shape=(rows, cols), dtype=float)


def _save_mm(m, path):
    coo = scipy.sparse.coo_matrix(m)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def _load_raw(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise ParseError(f"file holds {len(blob)} bytes, shorter than the header")
    if blob[:8] != RAW_MAGIC:
        raise ParseError(f"bad magic {blob[:8]!r}")
    rows, cols = struct.unpack("<II", blob[8:16])
    if rows * cols > _MAX_ELEMENTS:
        raise DimensionOverflow(f"{rows} x {cols} entries declared")
    expected = rows * cols * 8
    if len(blob) - 16 != expected:
        raise ParseError(
            f"payload holds {len(blob) - 16} bytes, header declares {expected}")
    flat = np.frombuffer(blob, dtype="<f8", offset=16)
    return flat.reshape(rows, cols).astype(np.float64, copy=True)


def _save_raw(m, path):
    if scipy.sparse.issparse(m):
        m = m.toarray()
    m = np.ascontiguousarray(np.asarray(m, dtype="<f8"))
    if m.ndim != 2:
        raise ValueError(f"matrix must be 2-dimensional, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<II", m.shape[0], m.shape[1]))
        fh.write(m.tobytes(order="C"))
