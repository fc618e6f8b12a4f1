"""Dataset directories, draw files and CSV exports.

Dataset directory layout::

    responses.csv       # shape: T,N  then T rows of N values
    covariates.csv      shared covariates, or covariates_<l>.csv per equation;
                        # shape: T,p1,...,pM  then T rows, each the flat
                        covariate tensor of one time point (first mode fastest)
    truth.json          optional ground truth of simulated data

Draw files: ``draws.bin`` holds one little-endian float64 record per stored
draw, appended in order; ``draws.json`` describes the record layout and
carries the per-chain arrays that are not per-draw.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .model import Dataset
from .tensor import DimensionError, parse_shape_header

RESPONSES = "responses.csv"
SHARED_COVARIATES = "covariates.csv"
TRUTH = "truth.json"
DRAWS_BIN = "draws.bin"
DRAWS_META = "draws.json"
_RECORD_FIELDS = ("coef", "mu", "noise", "trans", "zeta", "tau", "path")


class DatasetError(DimensionError):
    """A dataset file is malformed or inconsistent with the others."""


def _fmt(v: float) -> str:
    return f"{v:.17g}"


# --- matrices with shape headers --------------------------------------------

def write_rows_csv(rows: np.ndarray, path, shape=None) -> None:
    """Write a 2-D array row by row below a ``# shape:`` header.

    ``shape`` defaults to the array shape; for covariates it is ``(T, p1, ..)``
    and each row holds one flattened tensor.
    """
    rows = np.asarray(rows, dtype=float)
    shape = rows.shape if shape is None else tuple(shape)
    with open(path, "w") as fh:
        fh.write("# shape: " + ",".join(str(s) for s in shape) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def read_rows_csv(path) -> tuple[np.ndarray, tuple]:
    """Inverse of :func:`write_rows_csv`; returns (rows, header shape)."""
    path = Path(path)
    with open(path) as fh:
        try:
            shape = parse_shape_header(fh.readline())
        except DimensionError as exc:
            raise DatasetError(f"{path.name}: {exc}") from exc
        width = int(np.prod(shape[1:])) if len(shape) > 1 else 1
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != width:
                raise DatasetError(f"{path.name} line {lineno}: {len(parts)} values, expected {width}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise DatasetError(f"{path.name} line {lineno}: non-numeric entry") from exc
            if not all(math.isfinite(v) for v in vals):
                raise DatasetError(f"{path.name} line {lineno}: NaN or infinite entry")
            rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(len(rows), width)
    if arr.shape[0] != shape[0]:
        raise DatasetError(f"{path.name}: header declares {shape[0]} rows, found {arr.shape[0]}")
    return arr, shape


# --- datasets ----------------------------------------------------------------

def _to_jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"cannot serialize {type(o)}")


def write_dataset(data: Dataset, directory, truth: dict | None = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_rows_csv(data.responses, out / RESPONSES)
    distinct = {id(x) for x in data.covariates}
    if len(distinct) == 1:
        targets = [(SHARED_COVARIATES, data.covariates[0])]
    else:
        targets = [(f"covariates_{ell}.csv", x) for ell, x in enumerate(data.covariates)]
    for name, x in targets:
        # row t of the Fortran-order reshape is x[t] flattened first-mode-fastest
        write_rows_csv(x.reshape(x.shape[0], -1, order="F"), out / name, shape=x.shape)
    if truth is not None:
        with open(out / TRUTH, "w") as fh:
            json.dump(truth, fh, indent=2, sort_keys=True, default=_to_jsonable)
    return out


def _read_covariates(path) -> np.ndarray:
    flat, shape = read_rows_csv(path)
    if len(shape) < 3:
        raise DatasetError(f"{Path(path).name}: covariates need T plus at least two modes")
    return flat.reshape(shape, order="F")


def load_dataset(directory) -> Dataset:
    """Read a dataset directory written by :func:`write_dataset` (or by hand)."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"dataset directory {d} does not exist")
    y, _ = read_rows_csv(d / RESPONSES)
    T, N = y.shape
    if (d / SHARED_COVARIATES).exists():
        shared = _read_covariates(d / SHARED_COVARIATES)
        xs = [shared] * N
    else:
        xs = []
        for ell in range(N):
            p = d / f"covariates_{ell}.csv"
            if not p.exists():
                raise DatasetError(f"missing {p.name} for equation {ell}")
            xs.append(_read_covariates(p))
    for ell, x in enumerate(xs):
        if x.shape[0] != T:
            raise DatasetError(f"equation {ell}: {x.shape[0]} covariate rows for T={T} responses")
    return Dataset(y, xs)


def load_truth(directory) -> dict | None:
    p = Path(directory) / TRUTH
    if not p.exists():
        return None
    with open(p) as fh:
        raw = json.load(fh)
    for key in ("coefficients", "path", "mu", "noise_var", "trans"):
        if raw.get(key) is not None:
            raw[key] = np.asarray(raw[key], dtype=np.int64 if key == "path" else float)
    return raw


# --- posterior draws ---------------------------------------------------------

class DrawWriter:
    """Append-only writer of per-draw records.

    Each record is the concatenation of the fields in ``_RECORD_FIELDS``
    as float64, in C order.
    """

    def __init__(self, path, shapes: dict):
        self.path = Path(path)
        self.shapes = {k: tuple(shapes[k]) for k in _RECORD_FIELDS}
        self.width = sum(int(np.prod(s)) for s in self.shapes.values())
        self.count = 0
        self.path.write_bytes(b"")

    def append(self, **fields) -> None:
        parts = []
        for k in _RECORD_FIELDS:
            a = np.asarray(fields[k], dtype="<f8")
            if a.shape != self.shapes[k]:
                raise DimensionError(f"{k} has shape {a.shape}, layout says {self.shapes[k]}")
            parts.append(a.ravel())
        with open(self.path, "ab") as fh:
            fh.write(np.concatenate(parts).tobytes())
        self.count += 1


def write_draws(draws, directory) -> Path:
    """Store a ``PosteriorDraws`` as ``draws.bin`` plus the ``draws.json`` sidecar."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    if not isinstance(draws.coef, np.ndarray):
        raise DimensionError("only equal coefficient shapes across equations can be stored")
    S = draws.n_draws
    shapes = {k: getattr(draws, k).shape[1:] for k in _RECORD_FIELDS}
    writer = DrawWriter(out / DRAWS_BIN, shapes)
    for s in range(S):
        writer.append(**{k: getattr(draws, k)[s] for k in _RECORD_FIELDS})
    meta = {
        "format": "float64-le",
        "n_records": S,
        "record_width": writer.width,
        "fields": [{"name": k, "shape": list(shapes[k])} for k in _RECORD_FIELDS],
        "smoothed": draws.smoothed,
        "outcome_mse": draws.outcome_mse,
        "accept_rate": draws.accept_rate,
        "meta": draws.meta,
    }
    with open(out / DRAWS_META, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True, default=_to_jsonable)
    return out


def read_draws(directory):
    from .sampler import PosteriorDraws
    d = Path(directory)
    with open(d / DRAWS_META) as fh:
        meta = json.load(fh)
    raw = np.fromfile(d / DRAWS_BIN, dtype="<f8")
    S, width = meta["n_records"], meta["record_width"]
    if raw.size != S * width:
        raise DimensionError(f"{DRAWS_BIN} holds {raw.size} values, sidecar implies {S * width}")
    raw = raw.reshape(S, width)
    fields, pos = {}, 0
    for f in meta["fields"]:
        shape = tuple(f["shape"])
        n = int(np.prod(shape))
        fields[f["name"]] = raw[:, pos:pos + n].reshape((S,) + shape)
        pos += n
    fields["path"] = fields["path"].astype(np.int64)
    return PosteriorDraws(
        smoothed=np.asarray(meta["smoothed"], dtype=float).reshape(-1, fields["mu"].shape[2]),
        outcome_mse=np.asarray(meta["outcome_mse"], dtype=float),
        accept_rate=float(meta["accept_rate"]), meta=meta["meta"], **fields,
    )


# --- plain tables ------------------------------------------------------------

def write_table(path, header, rows) -> None:
    """CSV with a header row; floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_table(path) -> tuple[list, list]:
    """Read a table written by :func:`write_table`; numeric cells become floats."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for r in reader:
            if len(r) != len(header):
                raise DatasetError(f"{Path(path).name}: ragged row {r!r}")
            row = []
            for v in r:
                try:
                    row.append(float(v))
                except ValueError:
                    row.append(v)
            rows.append(row)
    return header, rows


def _param_series(draws):
    """(name, values over draws) for every stored scalar parameter."""
    S, N, K = draws.mu.shape
    out = []
    coef = draws.coef.reshape(S, N, K, -1)
    shape = draws.coef.shape[3:]
    for ell in range(N):
        for k in range(K):
            for i, idx in enumerate(np.ndindex(*shape)):
                out.append((f"coef[{ell},{k},{','.join(map(str, idx))}]", coef[:, ell, k, i]))
            out.append((f"mu[{ell},{k}]", draws.mu[:, ell, k]))
            out.append((f"noise[{ell},{k}]", draws.noise[:, ell, k]))
            out.append((f"tau[{ell},{k}]", draws.tau[:, ell, k]))
    for i in range(K):
        for j in range(K):
            out.append((f"trans[{i},{j}]", draws.trans[:, i, j]))
    return out


def export_posterior_summary(draws, path, quantiles=(0.05, 0.5, 0.95)) -> None:
    """Posterior mean, sd and quantiles of every scalar parameter."""
    header = ["parameter", "mean", "sd"] + [f"q{q:g}" for q in quantiles]
    rows = []
    for name, v in _param_series(draws):
        with np.errstate(over="ignore"):
            sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        rows.append([name, float(np.mean(v)), sd] + [float(x) for x in np.quantile(v, quantiles)])
    write_table(path, header, rows)
