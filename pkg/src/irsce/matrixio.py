"""Plain-text complex matrix files.

Format: one matrix row per line, entries separated by whitespace, each entry
written as "a+bi" (both parts always present, 17 significant digits, e.g.
"1.5-2.25e-06i"). Used to exchange correlation square roots and training
schedules with external tools.
"""

from __future__ import annotations

import numpy as np


def format_complex(z: complex) -> str:
    """Render one complex number as "a+bi"."""
    return f"{z.real:.17g}{z.imag:+.17g}i"


def parse_complex(token: str) -> complex:
    """Parse "a+bi" (also accepts a bare real part)."""
    s = token.strip()
    if not s:
        raise ValueError("empty complex entry")
    if s.endswith("i") or s.endswith("I"):
        s = s[:-1] + "j"
    try:
        return complex(s)
    except ValueError as exc:
        raise ValueError(f"cannot parse complex entry {token!r}") from exc


def save_complex_matrix(path, a) -> None:
    """Write a 2-D complex array to `path` in the a+bi text format."""
    a = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in a:
            fh.write(" ".join(format_complex(z) for z in row))
            fh.write("\n")


def load_complex_matrix(path) -> np.ndarray:
    """Read a 2-D complex array from the a+bi text format."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append([parse_complex(tok) for tok in line.split()])
    if not rows:
        raise ValueError(f"{path}: no matrix rows found")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows, not a matrix")
    return np.array(rows, dtype=np.complex128)
