"""Text formats for vectors and matrices.

Vectors are one decimal value per line; matrices are comma-separated rows
with an optional ``# rows cols`` comment header.  Values are written with 17
significant digits, so write/read round-trips are bit-exact for doubles.
"""

from __future__ import annotations

import numpy as np


class ParseError(ValueError):
    """Malformed numeric file; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def write_vector(path, v) -> None:
    v = np.asarray(v, dtype=np.float64)
    with open(path, "w") as f:
        for x in v:
            f.write("%.17g\n" % x)


def read_vector(path) -> np.ndarray:
    vals = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            # Tolerate a single CSV row as well.
            for tok in line.replace(",", " ").split():
                try:
                    vals.append(float(tok))
                except ValueError:
                    raise ParseError(lineno, f"bad number {tok!r}")
    return np.asarray(vals, dtype=np.float64)


def write_matrix(path, X) -> None:
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w") as f:
        f.write(f"# {X.shape[0]} {X.shape[1]}\n")
        for row in X:
            f.write(",".join("%.17g" % x for x in row) + "\n")


def read_matrix(path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = [t for t in line.replace(",", " ").split() if t]
            try:
                row = [float(t) for t in toks]
            except ValueError as e:
                raise ParseError(lineno, str(e))
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(lineno,
                                 f"expected {width} columns, found {len(row)}")
            rows.append(row)
    if not rows:
        raise ParseError(0, "empty matrix file")
    return np.asarray(rows, dtype=np.float64)
