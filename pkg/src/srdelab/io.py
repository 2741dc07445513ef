"""Row-oriented tables and run manifests."""
from __future__ import annotations

import csv
import json
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np

FORMATS = ("csv", "jsonl")


def _plain(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def _cell(value):
    value = _plain(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def ensure_writable(out_dir):
    """Create ``out_dir`` and check it accepts files; raises ``OSError`` otherwise."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write_probe"
    probe.write_text("")
    probe.unlink()
    return out_dir


def write_table(rows, path, columns=None, fmt="csv"):
    """Write ``rows`` (dicts) with a stable column order.

    ``columns`` fixes the header; otherwise keys are taken in first-seen order.
    An empty ``rows`` with known ``columns`` gives a header-only CSV.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row.get(c)) for c in columns])
        else:
            for row in rows:
                fh.write(json.dumps({c: _plain(row.get(c)) for c in columns}) + "\n")
    return path


def read_table(path):
    """Read a table written by :func:`write_table` back as a list of dicts of strings/values."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return [json.loads(line) for line in path.read_text().splitlines() if line]
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest(config, seed, command, wall_clock, extra=None):
    import scipy
    import sklearn

    from . import __version__

    doc = {
        "command": command,
        "config_digest": config.digest(),
        "seed": seed,
        "versions": {
            "srdelab": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
            "platform": platform.platform(),
        },
        "wall_clock_s": wall_clock,
        "note": "sweep design and thresholds are this tool's own choices",
        "config": config.to_dict(),
    }
    if extra:
        doc.update(extra)
    return doc


def emit_outputs(tables, out_dir, fmt="csv", manifest_doc=None):
    """Write ``{name: (rows, columns)}`` tables plus ``manifest.json`` into ``out_dir``."""
    out_dir = ensure_writable(out_dir)
    written = {}
    for name, (rows, columns) in tables.items():
        written[name] = write_table(rows, out_dir / f"{name}.{fmt}", columns, fmt)
    if manifest_doc is not None:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(manifest_doc, indent=2, sort_keys=True) + "\n")
        written["manifest"] = path
    return written


def default_threads():
    """Worker count from ``SRDELAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SRDELAB_THREADS", "1")))
    except ValueError:
        return 1
