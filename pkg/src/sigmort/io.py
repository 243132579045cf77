"""On-disk formats: fitted models, delimited tables and run manifests.

Models are stored as uncompressed ``.npz`` archives: every numeric field is
its own array (so a round trip is bit-exact) and a JSON header carries the
schema version, model kind and scalar attributes. Tables are tab-separated
text with one header line; floats are written with ``repr`` so they parse
back to the same double.
"""

import hashlib
import io as _io
import json
import os
from pathlib import Path

import numpy as np

from sigmort import __version__
from sigmort.decomposition import BasisModel, FpcaModel, HutsModel, LcModel
from sigmort.errors import ConfigError, ParseError

SCHEMA_VERSION = 1
DELIMITER = "\t"

_BASIS_ARRAYS = (
    "grid", "years", "mean", "basis", "coeffs", "residuals", "fit_variance",
    "mean_variance", "obs_variance", "smooth_residuals", "singular_values",
)
_LC_ARRAYS = ("ages", "years", "a", "b", "k")
_KINDS = {"huts": HutsModel, "fpca": FpcaModel}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _write_bytes_atomic(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_model(model, path) -> Path:
    """Write a fitted HUts, FPCA or Lee-Carter model to ``path`` (``.npz``)."""
    path = Path(path)
    if isinstance(model, BasisModel):
        arrays = {name: np.asarray(getattr(model, name)) for name in _BASIS_ARRAYS}
        header = {
            "kind": model.kind,
            "m": model.m,
            "sig_columns": model.sig_columns,
            "sigma_known": bool(model.sigma_known),
        }
    elif isinstance(model, LcModel):
        arrays = {name: np.asarray(getattr(model, name)) for name in _LC_ARRAYS}
        header = {"kind": "lc"}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    header.update(
        schema_version=SCHEMA_VERSION,
        software_version=__version__,
        metadata=_jsonable(model.metadata),
    )
    buf = _io.BytesIO()
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    np.savez(buf, __header__=np.frombuffer(header_bytes, dtype=np.uint8), **arrays)
    _write_bytes_atomic(path, buf.getvalue())
    return path


def load_model(path):
    """Inverse of :func:`save_model`."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(bytes(data["__header__"]).decode("utf-8"))
            arrays = {k: data[k] for k in data.files if k != "__header__"}
    except (ValueError, KeyError, EOFError) as exc:
        raise ParseError(f"not a model file: {path} ({exc})") from None
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported model schema version {version!r}")
    kind = header["kind"]
    meta = header.get("metadata", {})
    if kind == "lc":
        return LcModel(metadata=meta, **{k: arrays[k] for k in _LC_ARRAYS})
    if kind not in _KINDS:
        raise ParseError(f"unknown model kind {kind!r}")
    return _KINDS[kind](
        kind=kind,
        m=header.get("m"),
        sig_columns=header.get("sig_columns"),
        sigma_known=header.get("sigma_known", True),
        metadata=meta,
        **{k: arrays[k] for k in _BASIS_ARRAYS},
    )


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def format_table(header, rows) -> str:
    lines = [DELIMITER.join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(DELIMITER.join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_table(path, header, rows) -> Path:
    path = Path(path)
    _write_bytes_atomic(path, format_table(header, rows).encode("utf-8"))
    return path


def read_table(path) -> tuple:
    """Return ``(header, rows)`` with every cell left as a string."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(f"empty table: {path}")
    header = lines[0].split(DELIMITER)
    rows = [line.split(DELIMITER) for line in lines[1:] if line]
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: wrong field count", line=i)
    return header, rows


def forecast_rows(grid, point, variance, model_tag):
    """Long format ``(age, horizon, point, variance, model)``."""
    H, q = point.shape
    for h in range(H):
        for i in range(q):
            var = np.nan if variance is None else variance[h, i]
            yield (grid[i], h + 1, point[h, i], var, model_tag)


def interval_rows(interval, seed, L):
    for j, h in enumerate(interval.horizons):
        for i, x in enumerate(interval.grid):
            yield (x, int(h), interval.lower[j, i], interval.upper[j, i],
                   interval.nominal, interval.method, seed, L)


FORECAST_HEADER = ("age", "horizon", "point", "variance", "model")
INTERVAL_HEADER = ("age", "horizon", "lower", "upper", "nominal", "method", "seed", "L")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, params: dict, inputs, artifacts) -> Path:
    """Write ``manifest.json`` listing parameters, input and artifact digests.

    Paths are stored relative to ``out_dir`` for artifacts and as given for
    inputs, so the manifest does not depend on the working directory.
    """
    out_dir = Path(out_dir)
    doc = {
        "command": command,
        "software_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "parameters": _jsonable(params),
        "inputs": {str(p): sha256_file(p) for p in inputs if p is not None},
        "artifacts": {
            Path(a).relative_to(out_dir).as_posix(): sha256_file(a) for a in sorted(map(str, artifacts))
        },
    }
    path = out_dir / "manifest.json"
    _write_bytes_atomic(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return path


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from None
    return path
