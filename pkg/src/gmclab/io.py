"""Atomic file output shared by the exporters and the command line."""

from __future__ import annotations

import contextlib
import csv
import json
import math
import os
import tempfile


@contextlib.contextmanager
def atomic_writer(path, mode="w"):
    """Write to a temporary sibling file and rename it into place on success.

    On any exception the temporary file is removed and ``path`` is untouched.
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        newline = "" if "b" not in mode else None
        with os.fdopen(fd, mode, newline=newline) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def fmt(x) -> str:
    """17 significant digits, '.' decimal separator."""
    if isinstance(x, (int, str)) and not isinstance(x, bool):
        return str(x)
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    with atomic_writer(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_json(path, obj):
    with atomic_writer(path) as fh:
        json.dump(_finite(obj), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _finite(obj):
    """Non-finite floats become strings so the output stays strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _json_default(obj):
    import numpy as np

    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
