"""CSV tables with ``#`` metadata lines, and small input readers."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ModelError
from .markov import JumpModel

__all__ = [
    "format_value",
    "render_csv",
    "write_csv",
    "read_csv",
    "read_edge_values",
    "load_model_file",
    "save_model_file",
    "distribution_rows",
]


def format_value(v):
    """Shortest round-tripping text for numbers; ``str`` otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def render_csv(columns, rows, meta=()):
    """CSV text: ``# key: value`` lines, a header row, then data rows.

    ``meta`` is an iterable of ``(key, value)`` pairs; the package version is
    always appended.
    """
    buf = io.StringIO()
    for key, value in list(meta) + [("version", f"nesslab {__version__}")]:
        buf.write(f"# {key}: {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, meta=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(columns, rows, meta))
    return path


def read_csv(path):
    """Return ``(meta dict, columns, rows)`` with rows as lists of strings."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def read_edge_values(path, n_states):
    """Antisymmetric matrix from ``from,to,value`` lines.

    Each listed pair sets ``F[from, to] = value`` and ``F[to, from] =
    -value``; listing both orientations with inconsistent values is an
    error.  Lines starting with ``#`` and a ``from,to,value`` header are
    skipped.
    """
    F = np.zeros((n_states, n_states))
    seen = np.zeros((n_states, n_states), dtype=bool)
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line.replace(" ", "") == "from,to,value":
            continue
        try:
            a, b, v = line.split(",")
            a, b, v = int(a), int(b), float(v)
        except ValueError as exc:
            raise ModelError(f"{path}:{k}: expected 'from,to,value'") from exc
        if not (0 <= a < n_states and 0 <= b < n_states) or a == b:
            raise ModelError(f"{path}:{k}: invalid edge ({a}, {b})")
        if seen[a, b] and not math.isclose(F[a, b], v, abs_tol=1e-12):
            raise ModelError(f"{path}:{k}: inconsistent value for edge ({a}, {b})")
        F[a, b], F[b, a] = v, -v
        seen[a, b] = seen[b, a] = True
    return F


def save_model_file(path, model):
    np.savez(
        path, U=model.U, beta=model.beta, F1=model.F1, gamma=model.gamma, epsilon=model.epsilon
    )


def load_model_file(path):
    """Load a :class:`~nesslab.markov.JumpModel` saved by :func:`save_model_file`."""
    try:
        with np.load(path) as d:
            return JumpModel(d["U"], float(d["beta"]), d["F1"], d["gamma"], float(d["epsilon"]))
    except (OSError, KeyError, ValueError) as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from exc


def distribution_rows(p, labels=None):
    labels = labels or [str(i) for i in range(len(p))]
    return [(lab, v) for lab, v in zip(labels, p)]
