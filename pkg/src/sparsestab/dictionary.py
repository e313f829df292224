"""Dictionaries: n x m real matrices with unit Euclidean-norm columns.

Constructors validate strictly and never normalize silently; the only
normalizing entry points are :func:`normalize_columns` and the tail of
:func:`random_gaussian`.  Dictionary values are immutable after construction
and safe to share between workers.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ColumnNotUnitNorm,
    IoFailure,
    NonFinite,
    NonRectangular,
    NotPowerOfTwo,
    ParseFailure,
    ValidationError,
    ZeroColumn,
)

UNIT_NORM_TOL = 1e-12

# Recorded in every experiment report so runs can be reproduced exactly.
RNG_DESCRIPTION = (
    "numpy.random.default_rng (PCG64); Gaussian entries drawn row-major via "
    "standard_normal((n, m)), then columns normalized"
)


@dataclass(frozen=True)
class Dictionary:
    """Immutable matrix of unit-norm atoms (columns)."""

    entries: np.ndarray
    label: str = ""

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValidationError(f"expected a 2-d matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NonFinite("matrix contains non-finite entries")
        norms = np.linalg.norm(a, axis=0)
        dev = np.abs(norms - 1.0)
        worst = int(np.argmax(dev))
        if dev[worst] > UNIT_NORM_TOL:
            raise ColumnNotUnitNorm(worst, float(norms[worst]))
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def m(self):
        return self.entries.shape[1]

    def atom(self, i):
        return self.entries[:, i]


def _as_matrix(rows):
    try:
        widths = {len(r) for r in rows}
    except TypeError as exc:
        raise NonRectangular("input rows must be sequences of reals") from exc
    if len(rows) == 0 or len(widths) != 1:
        raise NonRectangular(f"rows have inconsistent lengths {sorted(widths)}" if widths
                             else "empty input")
    a = np.array(rows, dtype=float)
    if a.ndim != 2 or a.shape[1] == 0:
        raise NonRectangular(f"expected rows of reals, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("input contains non-finite values")
    return a


def from_entries(rows, label=""):
    """Build a Dictionary from row data, validating unit column norms."""
    return Dictionary(_as_matrix(rows), label)


def normalize_columns(rows, label=""):
    """Scale each column to unit norm; reject (near-)zero columns."""
    a = _as_matrix(rows)
    norms = np.linalg.norm(a, axis=0)
    bad = np.flatnonzero(norms <= UNIT_NORM_TOL)
    if bad.size:
        raise ZeroColumn(int(bad[0]))
    return Dictionary(a / norms, label)


def random_gaussian(n, m, seed, label=None):
    """Column-normalized i.i.d. standard-normal matrix from a fixed seeded RNG.

    The same (n, m, seed) always yields bit-identical entries.
    """
    if n < 1 or m < 1:
        raise ValidationError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, m))
    norms = np.linalg.norm(g, axis=0)
    bad = np.flatnonzero(norms <= UNIT_NORM_TOL)
    if bad.size:
        raise ZeroColumn(int(bad[0]))
    if label is None:
        label = f"gaussian-{n}x{m}-seed{seed}"
    return Dictionary(g / norms, label)


def _hadamard(n):
    h = np.array([[1.0]])
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


def dirac_hadamard(n):
    """Concatenation [I | H/sqrt(n)] of the identity and a normalized
    Sylvester Hadamard basis; coherence is exactly 1/sqrt(n)."""
    if n < 1 or (n & (n - 1)) != 0:
        raise NotPowerOfTwo(n)
    a = np.hstack([np.eye(n), _hadamard(n) / np.sqrt(n)])
    return Dictionary(a, f"dirac-hadamard-{n}")


# ---------------------------------------------------------------------------
# Plain-text matrix file format:
#   line 1: "n m"  (two base-10 integers)
#   next n lines: m reals each, space separated, written with '%.17g'
#   lines starting with '#' are comments and are skipped


def save(dictionary, path):
    """Write a dictionary in the plain-text matrix format (17 sig. digits)."""
    lines = []
    if dictionary.label:
        lines.append(f"# label: {dictionary.label}")
    lines.append(f"{dictionary.n} {dictionary.m}")
    for row in dictionary.entries:
        lines.append(" ".join(format(v, ".17g") for v in row))
    text = "\n".join(lines) + "\n"
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _data_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, stripped


def _label_comment(text):
    for raw in text.splitlines():
        stripped = raw.strip()
        if stripped.startswith("# label:"):
            return stripped[len("# label:"):].strip()
    return None


def load(path):
    """Read a dictionary from the plain-text matrix format."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    lines = _data_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseFailure("empty matrix file") from None
    tokens = header.split()
    if len(tokens) != 2:
        raise ParseFailure(f"header must be 'n m', got {len(tokens)} tokens", lineno, 1)
    try:
        n, m = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise ParseFailure(f"header must hold two integers, got {header!r}", lineno, 1) from None
    if n < 1 or m < 1:
        raise ParseFailure(f"header dimensions must be positive, got {n} {m}", lineno, 1)

    rows = []
    for _ in range(n):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise ParseFailure(f"expected {n} data rows, got {len(rows)}") from None
        tokens = line.split()
        if len(tokens) != m:
            raise ParseFailure(f"expected {m} values, got {len(tokens)}", lineno,
                               min(len(tokens), m) + 1)
        row = []
        for col, tok in enumerate(tokens, start=1):
            try:
                v = float(tok)
            except ValueError:
                raise ParseFailure(f"bad number {tok!r}", lineno, col) from None
            if not np.isfinite(v):
                raise ParseFailure(f"non-finite value {tok!r}", lineno, col)
            row.append(v)
        rows.append(row)
    leftover = next(lines, None)
    if leftover is not None:
        raise ParseFailure("trailing data after matrix rows", leftover[0], 1)

    label = _label_comment(text)
    return from_entries(rows, label if label is not None else str(path))


def save_vector(vector, path):
    """Write a real vector, one '%.17g' value per line; '#' comments allowed."""
    v = np.asarray(vector, dtype=float)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(format(x, ".17g") for x in v) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_vector(path):
    """Read a real vector (whitespace/newline separated, '#' comments)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    values = []
    for lineno, line in _data_lines(text):
        for col, tok in enumerate(line.split(), start=1):
            try:
                v = float(tok)
            except ValueError:
                raise ParseFailure(f"bad number {tok!r}", lineno, col) from None
            if not np.isfinite(v):
                raise ParseFailure(f"non-finite value {tok!r}", lineno, col)
            values.append(v)
    if not values:
        raise ParseFailure("empty vector file")
    return np.array(values)
