"""Delimited text formats for every pipeline artifact.

Each file starts with a tag line ``# vibdamage <kind> v<version>``, followed
by ``# key: <json>`` metadata lines, a comma-separated column header and the
numeric rows. Floats are written with 17 significant digits, so a write/read
round trip is exact and reruns produce identical bytes.
"""
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import FormatError

FORMAT_VERSION = 1
_TAG = "# vibdamage"


def config_hash(obj):
    """SHA-256 of the canonical JSON form of ``obj`` (first 16 hex digits)."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt(x):
    x = float(x)
    if not np.isfinite(x):
        return str(x)
    # integral values (indices, counts, exact zeros) print without ".0"
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def write_table(path, kind, columns, rows, meta=None):
    rows = np.atleast_2d(np.asarray(rows, dtype=float)) if len(rows) else np.empty((0, len(columns)))
    if rows.shape[1] != len(columns):
        raise FormatError(f"{kind}: {rows.shape[1]} values per row but {len(columns)} columns")
    lines = [f"{_TAG} {kind} v{FORMAT_VERSION}"]
    for key, val in (meta or {}).items():
        lines.append(f"# {key}: {json.dumps(val, sort_keys=True)}")
    lines.append(",".join(columns))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path, kind):
    """Returns ``(meta, columns, rows)``; rejects wrong kinds and versions."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(_TAG):
        raise FormatError(f"{path}: missing format tag line")
    parts = lines[0].split()
    if len(parts) != 4 or parts[2] != kind:
        raise FormatError(f"{path}: expected a {kind!r} file, found {lines[0]!r}")
    if parts[3] != f"v{FORMAT_VERSION}":
        raise FormatError(f"{path}: unsupported format version {parts[3]}")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, val = lines[i][1:].partition(":")
        if not sep:
            raise FormatError(f"{path}:{i + 1}: malformed metadata line")
        try:
            meta[key.strip()] = json.loads(val)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{i + 1}: bad metadata value ({exc.msg})") from None
        i += 1
    if i >= len(lines):
        raise FormatError(f"{path}: missing column header")
    columns = lines[i].split(",")
    data = []
    for j, line in enumerate(lines[i + 1:], start=i + 2):
        if not line.strip():
            continue
        try:
            vals = [float(v) for v in line.split(",")]
        except ValueError:
            raise FormatError(f"{path}:{j}: non-numeric value") from None
        if len(vals) != len(columns):
            raise FormatError(f"{path}:{j}: expected {len(columns)} values, got {len(vals)}")
        data.append(vals)
    rows = np.array(data, dtype=float).reshape(len(data), len(columns))
    return meta, columns, rows


def _require(meta, path, **expected):
    for key, val in expected.items():
        if val is not None and meta.get(key) != val:
            raise FormatError(f"{path}: {key} is {meta.get(key)!r}, expected {val!r}")


# measurement sets ---------------------------------------------------------

def write_measurement_set(path, mset):
    path = Path(path)
    p = mset.samples.shape[1]
    meta = dict(mset.metadata)
    meta.setdefault("config_hash", config_hash(meta.get("config", {})))
    sidecar = {"sensors": p, "samples": int(mset.samples.shape[0]), **meta}
    columns = ["time"] + [f"s{i + 1}" for i in range(p)]
    write_table(path, "measurement", columns, np.column_stack([mset.times, mset.samples]),
                {"sensors": p, "units": "s; m/s^2 read as displacement"})
    meta_path = path.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(sidecar, sort_keys=True, indent=1) + "\n")
    return path


def read_measurement_set(path, sensors=None):
    from .simulate import MeasurementSet

    path = Path(path)
    meta, columns, rows = read_table(path, "measurement")
    _require(meta, path, sensors=sensors)
    if columns[0] != "time" or rows.shape[1] < 2:
        raise FormatError(f"{path}: first column must be time")
    if rows.shape[0] < 2:
        raise FormatError(f"{path}: need at least two samples")
    meta_path = path.with_suffix(".meta.json")
    extra = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return MeasurementSet(rows[:, 0].copy(), rows[:, 1:].copy(), extra)


# modal observations -------------------------------------------------------

def modal_columns(n, p):
    cols = []
    for k in range(1, n + 1):
        cols.append(f"omega{k}")
        cols.extend(f"b{k}_{s}" for s in range(1, p + 1))
    return cols


def write_modal_observation(path, obs, n, p, meta=None):
    obs = np.asarray(obs, dtype=float)
    if obs.size != n * (p + 1):
        raise FormatError(f"observation length {obs.size} does not match n={n}, p={p}")
    return write_table(path, "modal", modal_columns(n, p), obs[None, :],
                       {"modes": n, "sensors": p, **(meta or {})})


def read_modal_observation(path, n=None, p=None):
    meta, _, rows = read_table(path, "modal")
    _require(meta, path, modes=n, sensors=p)
    if rows.shape[0] != 1:
        raise FormatError(f"{path}: expected a single record, found {rows.shape[0]}")
    return rows[0], meta


# noise model --------------------------------------------------------------

def write_noise_model(path, model, n, p, meta=None):
    dim = model.dim
    rows = np.vstack([model.mean[None, :], model.cov])
    return write_table(path, "noise", modal_columns(n, p), rows,
                       {"modes": n, "sensors": p, "dim": dim, **(meta or {})})


def read_noise_model(path, n=None, p=None):
    from .noise import NoiseModel

    meta, _, rows = read_table(path, "noise")
    _require(meta, path, modes=n, sensors=p)
    dim = rows.shape[1]
    if rows.shape[0] != dim + 1:
        raise FormatError(f"{path}: expected {dim + 1} rows (mean + covariance), got {rows.shape[0]}")
    try:
        return NoiseModel.from_moments(rows[0], rows[1:]), meta
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# element tables -----------------------------------------------------------

def write_damage(path, d, meta=None):
    d = np.asarray(d, dtype=float)
    rows = np.column_stack([np.arange(1, d.size + 1), d])
    return write_table(path, "damage", ["element", "d"], rows, {"elements": d.size, **(meta or {})})


def read_damage(path, elements=None):
    meta, _, rows = read_table(path, "damage")
    _require(meta, path, elements=elements)
    return rows[:, 1].copy(), meta


def write_statistics(path, stats, meta=None):
    n = stats["mean"].size
    rows = np.column_stack([np.arange(1, n + 1), stats["min"], stats["mean"], stats["max"]])
    return write_table(path, "statistics", ["element", "min", "mean", "max"], rows,
                       {"elements": n, **(meta or {})})


def read_statistics(path):
    meta, _, rows = read_table(path, "statistics")
    return {"min": rows[:, 1], "mean": rows[:, 2], "max": rows[:, 3]}, meta


def write_marginal(path, names, edges, density, meta=None):
    """One row per cell: cell-center coordinates then density."""
    centers = [0.5 * (e[1:] + e[:-1]) for e in edges]
    grid = np.meshgrid(*centers, indexing="ij")
    rows = np.column_stack([g.ravel() for g in grid] + [density.ravel()])
    info = {"names": list(names), "shape": list(density.shape),
            "edges": [[float(x) for x in e] for e in edges], **(meta or {})}
    return write_table(path, "marginal", list(names) + ["density"], rows, info)


def read_marginal(path):
    meta, columns, rows = read_table(path, "marginal")
    edges = [np.asarray(e) for e in meta["edges"]]
    return columns[:-1], edges, rows[:, -1].reshape(meta["shape"]), meta


def write_samples(path, measure, meta=None):
    rows = np.column_stack([measure.samples, measure.bin_index, measure.probabilities])
    return write_table(path, "samples", list(measure.names) + ["bin", "probability"], rows,
                       meta)


def write_enkf(path, result, meta=None):
    w = result.windows
    cols = ["window", "ei_mean", "ei_spread", "alpha_mean", "alpha_spread",
            "beta_mean", "beta_spread"]
    n = result.d_mean.shape[1]
    cols += [f"d{i + 1}" for i in range(n)] + [f"d{i + 1}_spread" for i in range(n)]
    rows = np.column_stack([np.arange(1, w + 1), result.ei, result.alpha, result.beta,
                            result.d_mean, result.d_spread])
    return write_table(path, "enkf", cols, rows, {"elements": n, "windows": w, **(meta or {})})


def read_enkf(path):
    from .enkf import SmootherResult

    meta, _, rows = read_table(path, "enkf")
    n = meta["elements"]
    return SmootherResult(
        d_mean=rows[:, 7:7 + n], d_spread=rows[:, 7 + n:7 + 2 * n], ei=rows[:, 1:3],
        alpha=rows[:, 3:5], beta=rows[:, 5:7], diagnostics=meta,
    )
