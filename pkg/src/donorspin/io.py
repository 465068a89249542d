"""Reading and writing tables, reports and run configurations.

Every emitted file starts with a provenance record: tool name and version,
the command, its fully resolved configuration and a SHA-256 of the data
body. Nothing time- or host-dependent goes in, so identical configurations
produce byte-identical files.

CSV files carry the record as a single ``# {json}`` comment line, followed
by optional ``# ...`` annotation lines, a column header and the rows.
"""

import configparser
import csv
import hashlib
import io as _io
import json
import math
import sys
from fractions import Fraction

import numpy as np

from ._version import __version__
from .errors import IngestionError, UsageError

TOOL = "donorspin"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(obj, indent=None):
    """Canonical JSON: sorted keys, non-finite floats spelled as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=indent, allow_nan=False)


def content_hash(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def provenance(command, config, body):
    """Provenance record for ``body`` (the serialized data)."""
    return {
        "tool": TOOL,
        "version": __version__,
        "command": command,
        "config": _jsonable(config),
        "content_sha256": content_hash(dumps(config) + "\n" + body),
    }


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def csv_text(columns, rows, command, config, comments=()):
    """Full CSV document as a string."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row length does not match the header")
        w.writerow([format_value(v) for v in row])
    body = buf.getvalue()
    head = ["# " + dumps(provenance(command, config, body))]
    head += ["# " + str(c) for c in comments]
    return "\n".join(head) + "\n" + body


def json_text(payload, command, config):
    body = dumps(payload, indent=2)
    doc = {"provenance": provenance(command, config, body), "data": payload}
    return dumps(doc, indent=2) + "\n"


def write_text(path, text):
    """Write to ``path``; ``None`` or ``"-"`` means standard output."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# Ingestion


def read_csv(path):
    """Read a numeric CSV table, skipping ``#`` comment lines.

    Returns
    -------
    columns : list of str
    data : ndarray, shape (n_rows, n_columns)
    meta : dict
        Provenance record if the first comment line holds one, else ``{}``.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    meta = {}
    if lines and lines[0].startswith("#"):
        try:
            meta = json.loads(lines[0][1:])
        except json.JSONDecodeError:
            meta = {}
    body = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise IngestionError(f"{path}: no header row")
    rows = list(csv.reader(body))
    columns = [c.strip() for c in rows[0]]
    data = []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(columns):
            raise IngestionError(f"{path}: data row {n} has {len(row)} fields, expected {len(columns)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise IngestionError(f"{path}: data row {n}: {exc}") from exc
    if not data:
        raise IngestionError(f"{path}: no data rows")
    return columns, np.array(data), meta


def require_columns(path, columns, data, wanted):
    """Columns of ``data`` named in ``wanted``, in that order."""
    missing = [c for c in wanted if c not in columns]
    if missing:
        raise IngestionError(f"{path}: missing column(s) {', '.join(missing)}; found {', '.join(columns)}")
    return [data[:, columns.index(c)] for c in wanted]


SHARED_SECTION = "common"


def load_config(path, section=None):
    """Key-value configuration file.

    Plain ``key = value`` lines are allowed before any section header; they
    form the ``[common]`` section shared by all commands. A section named
    after a command holds keys for that command only. ``#`` starts a
    comment.

    Returns
    -------
    shared, specific : dict of str -> str
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IngestionError(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",), default_section="__unused__", strict=False
    )
    parser.optionxform = str
    try:
        parser.read_string(f"[{SHARED_SECTION}]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise IngestionError(f"malformed config {path}: {exc}") from exc
    shared = dict(parser[SHARED_SECTION])
    specific = dict(parser[section]) if section and parser.has_section(section) else {}
    return shared, specific


SYSTEM_KEYS = ("name", "S", "I", "A_MHz", "g_e", "g_n")


def system_from_mapping(mapping, base=None):
    """SpinSystem from string-valued keys ``name, S, I, A_MHz, g_e, g_n``.

    Keys left out are taken from ``base`` (a SpinSystem) when given;
    otherwise S and I are required and A_MHz, g_e, g_n default to 0, 2, 0.
    """
    from .spin import SpinSystem

    unknown = sorted(set(mapping) - set(SYSTEM_KEYS))
    if unknown:
        raise UsageError(f"unknown system key(s): {', '.join(unknown)}")
    if base is None:
        missing = [k for k in ("S", "I") if k not in mapping]
        if missing:
            raise UsageError(f"system definition lacks {', '.join(missing)}")
        fields = {"name": "custom", "S": 0.5, "I": 0.0, "A": 0.0, "g_e": 2.0, "g_n": 0.0}
    else:
        fields = {"name": base.name, "S": base.S, "I": base.I, "A": base.A, "g_e": base.g_e, "g_n": base.g_n}
    for key, value in mapping.items():
        if value is None:
            continue
        target = "A" if key == "A_MHz" else key
        if key == "name":
            fields[target] = str(value).strip()
            continue
        try:
            fields[target] = float(Fraction(str(value).strip())) if isinstance(value, str) else float(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"bad value for {key}: {value!r}") from exc
    return SpinSystem(**fields)


def load_system(path):
    """SpinSystem from a key-value file (keys ``name, S, I, A_MHz, g_e, g_n``)."""
    shared, _ = load_config(path)
    return system_from_mapping(shared)


def parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def parse_pair(text):
    """``"2,5"`` or ``"2 5"`` -> (2, 5)."""
    parts = str(text).replace(",", " ").split()
    if len(parts) != 2:
        raise UsageError(f"expected a level pair like '2,5', got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise UsageError(f"bad level pair {text!r}") from exc


def parse_budget(text):
    """Thermal budget ``"T_C duration_s [label]; ..."`` -> list of (T_C, duration_s, label)."""
    steps = []
    for item in str(text).split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(None, 2)
        if len(parts) < 2:
            raise UsageError(f"budget entry {item!r} needs a temperature (C) and a duration (s)")
        try:
            steps.append((float(parts[0]), float(parts[1]), parts[2] if len(parts) > 2 else ""))
        except ValueError as exc:
            raise UsageError(f"bad budget entry {item!r}") from exc
    return steps


def parse_windows(text):
    """``"lo:hi, lo:hi"`` -> [(lo, hi), ...]."""
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        try:
            lo, hi = (float(v) for v in item.split(":"))
        except ValueError as exc:
            raise UsageError(f"bad window {item!r}; use lo:hi") from exc
        out.append((lo, hi))
    return out
