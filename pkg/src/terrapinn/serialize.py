"""Deterministic file writers.

Checkpoints are npz-compatible zip containers written with a pinned
timestamp so identical content gives identical bytes; np.load reads them
directly.  Tables are plain CSV with shortest round-trip float formatting.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

# Fixed zip entry timestamp: determinism requires content-only bytes.
_EPOCH = (1980, 1, 1, 0, 0, 0)

FORMAT_VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays (npz layout) plus an optional meta.json entry."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        if meta is not None:
            payload = dict(meta)
            payload.setdefault("format_version", FORMAT_VERSION)
            info = zipfile.ZipInfo("meta.json", date_time=_EPOCH)
            zf.writestr(info, json.dumps(payload, indent=2, sort_keys=True))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]),
                                      allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH)
            zf.writestr(info, buf.getvalue())


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict | None]:
    """Read back (arrays, meta); meta is None when absent."""
    arrays: dict[str, np.ndarray] = {}
    meta = None
    with zipfile.ZipFile(path, "r") as zf:
        for entry in zf.namelist():
            with zf.open(entry) as fh:
                if entry == "meta.json":
                    meta = json.loads(fh.read().decode())
                elif entry.endswith(".npy"):
                    arrays[entry[:-4]] = np.lib.format.read_array(
                        io.BytesIO(fh.read()), allow_pickle=False)
    return arrays, meta


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(x))


def write_csv(path, header: list[str], rows) -> None:
    """Delimited text with a header row; floats round-trip exactly."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                format_float(v) if isinstance(v, (float, np.floating)) else str(v)
                for v in row) + "\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV written by write_csv; returns (header, data)."""
    with open(path, "r", newline="") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return header, data


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path, "r") as fh:
        return json.load(fh)
