# tunneling/utils.py
import os
import json
import hashlib
import tempfile
from itertools import takewhile

import numpy as np

SIGNIFICANT_DIGITS = 12


# ---------------------------------------------------------------------
# 1. HASHING
# ---------------------------------------------------------------------
def sha256_file_path(path):
    """
    sha256 of a file on disk, streamed in chunks.
    Used to stamp CSV headers with the config file that produced them.
    """
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            h.update(chunk)
    return h.hexdigest()


def _to_jsonable(obj):
    if hasattr(obj, "model_dump"):
        return _to_jsonable(obj.model_dump())
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return format_value(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def canonical_json(obj):
    """Sorted-key JSON with floats rendered at fixed precision."""
    return json.dumps(_to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def sha256_payload(obj):
    """
    Same as sha256_file_path but for an in-memory spec object
    (pydantic model, dict, array). Equal specs give equal digests.
    """
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------
# 2. CSV OUTPUT
# ---------------------------------------------------------------------
def format_value(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return f"{float(value):.{SIGNIFICANT_DIGITS}g}"


class CsvSink:
    """
    Row-by-row CSV writer for sweep results.

    Rows go to a temporary file in the target directory. `close()` moves it
    into place; `abort()` appends a ``# INCOMPLETE`` trailer first, so a
    failed sweep still leaves the rows it finished.
    """

    def __init__(self, path, columns, metadata=None):
        self.path = str(path)
        self.columns = list(columns)
        self.rows_written = 0
        directory = os.path.dirname(os.path.abspath(self.path))
        os.makedirs(directory, exist_ok=True)
        fd, self._tmp_path = tempfile.mkstemp(prefix=".partial-", suffix=".csv", dir=directory)
        self._fh = os.fdopen(fd, "w", newline="")
        for key, value in (metadata or {}).items():
            self._fh.write(f"# {key}: {value}\n")
        self._fh.write(",".join(self.columns) + "\n")
        self._fh.flush()

    def write_row(self, values):
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self._fh.write(",".join(format_value(v) for v in values) + "\n")
        self._fh.flush()
        self.rows_written += 1

    def close(self):
        self._fh.close()
        os.replace(self._tmp_path, self.path)
        return self.path

    def abort(self, reason=""):
        trailer = "# INCOMPLETE"
        if reason:
            trailer += f": {reason}"
        self._fh.write(trailer + "\n")
        return self.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort(str(exc).splitlines()[0] if str(exc) else exc_type.__name__)
        return False


def write_csv(path, columns, rows, metadata=None):
    with CsvSink(path, columns, metadata) as sink:
        for row in rows:
            sink.write_row(row)
    return str(path)


def read_csv_rows(path):
    """Numeric rows of a file written by CsvSink (metadata and header skipped)."""
    # loadtxt counts skipped rows before stripping comments
    with open(path, "r") as f:
        metadata = sum(1 for _ in takewhile(lambda line: line.startswith("#"), f))
    return np.loadtxt(path, delimiter=",", comments="#", skiprows=metadata + 1, ndmin=2)
