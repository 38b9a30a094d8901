"""File formats: CSV, the binary matrix file, model artifacts, prediction.

Binary matrix file (little endian)::

    offset  size  field
    0       4     magic  b"OEMX"
    4       4     u32    format version (1)
    8       8     u64    n_rows
    16      8     u64    n_cols
    24      4     u32    dtype code   (1 = float64)
    28      4     u32    layout code  (1 = column-major)
    32      ...   n_rows * n_cols float64 values, column after column

Model artifacts are UTF-8 JSON with sorted keys. Floats are written in
shortest round-trip form, so parsing an artifact reproduces every number
exactly. See ``MODEL_FORMAT`` and :meth:`ModelArtifact.to_dict` for the
schema.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cv import CvResult
from .errors import (
    BadMagicError,
    DimensionMismatchError,
    EmptyMatrixError,
    FormatError,
    IoError,
    LambdaOutOfRangeError,
    MissingResponseError,
    ModelError,
    ParseError,
    RaggedRowError,
    TruncatedFileError,
    UnknownModelError,
)
from .glm import sigmoid
from .gram import DEFAULT_BLOCK_BYTES, ColumnScaling, DenseDesign, DesignMatrix, MmapDesign, as_design
from .prox import PenaltySpec
from .solver import FitResult, PathFit

MAGIC = b"OEMX"
VERSION = 1
DTYPE_F64 = 1
LAYOUT_COLUMN_MAJOR = 1
HEADER = struct.Struct("<4sIQQII")
HEADER_SIZE = HEADER.size  # 32

MODEL_FORMAT = "oem-model"
MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# Binary matrix file
# ---------------------------------------------------------------------------


def write_binary(path, X, block_cols: int | None = None) -> None:
    """Write a dense matrix (or any design) in the binary layout."""
    design = as_design(X)
    n, p = design.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, n, p, DTYPE_F64, LAYOUT_COLUMN_MAJOR))
        dense = design.to_dense()
        step = block_cols or max(1, DEFAULT_BLOCK_BYTES // (8 * n))
        for j in range(0, p, step):
            np.ascontiguousarray(dense[:, j:j + step].T, dtype="<f8").tofile(fh)


def read_header(path) -> tuple[int, int]:
    """Validate the header and file size; return ``(n_rows, n_cols)``."""
    try:
        size = os.path.getsize(path)
        with open(path, "rb") as fh:
            raw = fh.read(HEADER_SIZE)
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(path, "not an OEMX matrix file (bad magic)")
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(path, "header is truncated")
    magic, version, n, p, dtype, layout = HEADER.unpack(raw)
    if version != VERSION:
        raise IoError(path, f"unsupported format version {version}")
    if dtype != DTYPE_F64 or layout != LAYOUT_COLUMN_MAJOR:
        raise IoError(path, f"unsupported dtype/layout codes {dtype}/{layout}")
    if n < 1 or p < 1:
        raise EmptyMatrixError(f"{path}: matrix is empty ({n}x{p})")
    expected = HEADER_SIZE + 8 * n * p
    if size < expected:
        raise TruncatedFileError(path, f"payload has {size - HEADER_SIZE} bytes, expected {8 * n * p}")
    if size > expected:
        raise IoError(path, f"{size - expected} unexpected trailing bytes")
    return int(n), int(p)


def open_mmapped(path, block_bytes: int = DEFAULT_BLOCK_BYTES) -> MmapDesign:
    """Map a binary matrix file; rows are read in blocks of at most ``block_bytes``."""
    n, p = read_header(path)
    return MmapDesign(path, n, p, offset=HEADER_SIZE, block_bytes=block_bytes)


def read_binary(path) -> np.ndarray:
    """Load a whole binary matrix file into memory."""
    return np.ascontiguousarray(open_mmapped(path)._mm)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _parse_float(text: str, line: int, col: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(line, col, text) from None


def read_csv_table(path, has_header: bool = True) -> tuple[list[str] | None, np.ndarray]:
    """Numeric CSV to ``(header, values)``. Line and column numbers in errors are 1-based."""
    header = None
    rows: list[list[float]] = []
    width = None
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None
    with fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if has_header and header is None:
                header = [h.strip() for h in rec]
                width = len(header)
                continue
            if width is None:
                width = len(rec)
            if len(rec) != width:
                raise RaggedRowError(lineno, len(rec), width)
            rows.append([_parse_float(t.strip(), lineno, c) for c, t in enumerate(rec, start=1)])
    if not rows:
        raise EmptyMatrixError(f"{path}: no data rows")
    return header, np.array(rows, dtype=np.float64)


def _response_index(header, width: int, response) -> int:
    if isinstance(response, str) and not response.lstrip("-").isdigit():
        if header is None or response not in header:
            raise MissingResponseError(f"response column {response!r} not found")
        return header.index(response)
    idx = int(response)
    if not -width <= idx < width:
        raise MissingResponseError(f"response column index {idx} out of range for {width} columns")
    return idx % width


def import_csv(path, has_header: bool = True, response="y"):
    """Read ``(X, y, feature_names)`` from a CSV; ``response=None`` reads features only.

    ``response`` is a header name or a 0-based column index.
    """
    header, table = read_csv_table(path, has_header)
    width = table.shape[1]
    if response is None:
        return DenseDesign(table), None, header
    j = _response_index(header, width, response)
    keep = [c for c in range(width) if c != j]
    if not keep:
        raise EmptyMatrixError("no feature columns besides the response")
    names = [header[c] for c in keep] if header else None
    return DenseDesign(table[:, keep]), table[:, j].copy(), names


def export_csv(path, X, y=None, names=None, response_name: str = "y") -> None:
    """Write ``X`` (and ``y`` as the first column) with round-trip float text."""
    X = as_design(X).to_dense()
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(([response_name] if y is not None else []) + names)
        yv = None if y is None else np.asarray(y, dtype=np.float64).ravel()
        for i in range(n):
            vals = [repr(float(v)) for v in X[i]]
            w.writerow(([repr(float(yv[i]))] if yv is not None else []) + vals)


def load_matrix(path, has_header: bool = True, response=None):
    """Open CSV or binary input by extension; binary files are memory mapped."""
    if str(path).endswith((".oemx", ".bin")):
        if response is not None:
            raise FormatError("binary matrix files hold features only; give the response separately")
        return open_mmapped(path), None, None
    return import_csv(path, has_header=has_header, response=response)


def read_vector(path) -> np.ndarray:
    """A single numeric column (header optional)."""
    try:
        header, tab = read_csv_table(path, has_header=False)
    except ParseError as exc:
        if exc.line != 1:
            raise
        header, tab = read_csv_table(path, has_header=True)
    if tab.shape[1] != 1:
        raise FormatError(f"{path}: expected a single column, found {tab.shape[1]}")
    return tab[:, 0]


# ---------------------------------------------------------------------------
# Model artifacts
# ---------------------------------------------------------------------------


def _floats(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


@dataclass
class ModelArtifact:
    """A fit plus, optionally, the cross-validation that tuned it."""

    fit: FitResult
    cv: CvResult | None = None

    @property
    def labels(self) -> list[str]:
        return self.fit.labels

    def to_dict(self) -> dict:
        f = self.fit
        models = []
        for lab, pf in f.paths.items():
            models.append({
                "label": lab,
                "penalty": pf.spec.params(),
                "lambda": _floats(pf.lambdas),
                "coef": _floats(pf.coef.T),  # one row per lambda
                "intercept": _floats(pf.intercepts),
                "iters": np.asarray(pf.iters).tolist(),
                "converged": np.asarray(pf.converged).tolist(),
                "loss": None if pf.loss is None else _floats(pf.loss),
                "outer_iters": None if pf.outer_iters is None else np.asarray(pf.outer_iters).tolist(),
                "nonzero": np.asarray(pf.nonzero).tolist(),
            })
        out = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "family": f.family,
            "n_obs": f.n_obs,
            "n_vars": f.n_vars,
            "intercept": f.intercept,
            "d": None if f.d is None or math.isnan(f.d) else float(f.d),
            "scaling": None if f.scaling is None else {
                "centers": _floats(f.scaling.centers), "scales": _floats(f.scaling.scales)},
            "meta": f.meta,
            "models": models,
            "cv": None,
        }
        if self.cv is not None:
            cv = self.cv
            out["cv"] = {
                "method": cv.method,
                "nfolds": cv.nfolds,
                "fold_assignment": np.asarray(cv.fold_assignment).tolist(),
                "best_model": cv.best_model,
                "meta": cv.meta,
                "models": {lab: {
                    "cvm": _floats(cv.cvm[lab]), "cvsd": _floats(cv.cvsd[lab]),
                    "cvup": _floats(cv.cvup(lab)), "cvlo": _floats(cv.cvlo(lab)),
                    "fold_errors": _floats(cv.fold_errors[lab]),
                    "lambda_min": cv.lambda_min(lab), "lambda_1se": cv.lambda_1se(lab),
                } for lab in cv.labels},
            }
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelArtifact":
        if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
            raise FormatError("not an OEM model artifact")
        if obj.get("version") != MODEL_VERSION:
            raise FormatError(f"unsupported model format version {obj.get('version')}")
        p = int(obj["n_vars"])
        paths = {}
        for m in obj["models"]:
            spec = PenaltySpec.from_params(m["penalty"], p)
            lam = np.array(m["lambda"], dtype=np.float64)
            coef = np.array(m["coef"], dtype=np.float64).reshape(lam.shape[0], p).T
            paths[m["label"]] = PathFit(
                label=m["label"], spec=spec, lambdas=lam, coef=np.ascontiguousarray(coef),
                intercepts=np.array(m["intercept"], dtype=np.float64),
                iters=np.array(m["iters"], dtype=np.int64),
                converged=np.array(m["converged"], dtype=bool),
                loss=None if m.get("loss") is None else np.array(m["loss"], dtype=np.float64),
                outer_iters=None if m.get("outer_iters") is None else np.array(m["outer_iters"], dtype=np.int64))
        sc = obj.get("scaling")
        fit = FitResult(paths=paths, n_obs=int(obj["n_obs"]), n_vars=p, family=obj["family"],
                        intercept=bool(obj["intercept"]),
                        scaling=None if sc is None else ColumnScaling(
                            np.array(sc["centers"], dtype=np.float64), np.array(sc["scales"], dtype=np.float64)),
                        d=math.nan if obj.get("d") is None else float(obj["d"]), meta=obj.get("meta") or {})
        cv = None
        cvd = obj.get("cv")
        if cvd is not None:
            ms = cvd["models"]
            cv = CvResult(family=fit.family, lambdas={lab: paths[lab].lambdas for lab in ms},
                          cvm={lab: np.array(ms[lab]["cvm"]) for lab in ms},
                          cvsd={lab: np.array(ms[lab]["cvsd"]) for lab in ms},
                          fold_assignment=np.array(cvd["fold_assignment"], dtype=np.int64),
                          fold_errors={lab: np.array(ms[lab]["fold_errors"]) for lab in ms},
                          fit=fit, method=cvd["method"], meta=cvd.get("meta") or {})
        return cls(fit=fit, cv=cv)

    @classmethod
    def loads(cls, text: str) -> "ModelArtifact":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"model artifact is not valid JSON: {exc}") from None
        try:
            return cls.from_dict(obj)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"malformed model artifact: {exc!r}") from None


def save_model(path, fit: FitResult | ModelArtifact, cv: CvResult | None = None) -> None:
    art = fit if isinstance(fit, ModelArtifact) else ModelArtifact(fit=fit, cv=cv)
    Path(path).write_text(art.dumps(), encoding="utf-8")


def load_model(path) -> ModelArtifact:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None
    return ModelArtifact.loads(text)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

_ON_GRID_RTOL = 1e-12


def coef_at(path: PathFit, s: float) -> tuple[np.ndarray, float]:
    """Coefficients at ``s``, interpolating linearly in ``log(lambda)`` between grid points."""
    lam = path.lambdas
    s = float(s)
    hi, lo = lam[0], lam[-1]
    if not (lo * (1 - _ON_GRID_RTOL) <= s <= hi * (1 + _ON_GRID_RTOL)):
        raise LambdaOutOfRangeError(f"lambda {s:g} outside the fitted grid [{lo:g}, {hi:g}]")
    hit = np.nonzero(np.abs(lam - s) <= _ON_GRID_RTOL * lam)[0]
    if hit.size:
        i = int(hit[0])
        return path.coef[:, i].copy(), float(path.intercepts[i])
    # lam is decreasing: lam[i] > s > lam[i+1]
    i = int(np.nonzero(lam > s)[0][-1])
    if s <= 0 or lam[i + 1] <= 0:
        t = (lam[i] - s) / (lam[i] - lam[i + 1])
    else:
        t = (math.log(lam[i]) - math.log(s)) / (math.log(lam[i]) - math.log(lam[i + 1]))
    beta = (1 - t) * path.coef[:, i] + t * path.coef[:, i + 1]
    b = (1 - t) * path.intercepts[i] + t * path.intercepts[i + 1]
    return beta, float(b)


def _resolve_s(model: ModelArtifact, label: str, s):
    pf = model.fit.paths[label]
    if s is None:
        return list(pf.lambdas)
    items = [s] if isinstance(s, (str, float, int, np.floating)) else list(s)
    out = []
    for item in items:
        if isinstance(item, str) and item.replace("_", ".") in ("lambda.min", "lambda.1se"):
            if model.cv is None:
                raise ModelError(f"s={item!r} needs a cross-validated model")
            out.append(model.cv.lambda_min(label) if item.replace("_", ".") == "lambda.min"
                       else model.cv.lambda_1se(label))
        else:
            try:
                out.append(float(item))
            except (TypeError, ValueError):
                raise ModelError(f"cannot interpret s={item!r}") from None
    return out


def predict(model, newx, which: str | None = None, s=None, type: str = "link") -> np.ndarray:
    """Predictions, one column per requested lambda.

    ``which`` names a penalty (default: the cross-validated best model, else
    the first one). ``s`` is a lambda, a list of lambdas, ``"lambda_min"``
    or ``"lambda_1se"``; by default the whole grid. ``type="response"``
    returns probabilities for logistic models.
    """
    if isinstance(model, FitResult):
        model = ModelArtifact(fit=model)
    if which is None:
        which = model.cv.best_model if model.cv is not None else model.labels[0]
    if which not in model.fit.paths:
        raise UnknownModelError(f"no model named {which!r}; available: {', '.join(model.labels)}")
    X = newx if isinstance(newx, DesignMatrix) else as_design(newx)
    if X.n_cols != model.fit.n_vars:
        raise DimensionMismatchError(f"newx has {X.n_cols} columns, model expects {model.fit.n_vars}")
    pf = model.fit.paths[which]
    cols = []
    for lam in _resolve_s(model, which, s):
        beta, b = coef_at(pf, lam)
        cols.append(X.matvec(beta) + b)
    eta = np.column_stack(cols)
    if type == "response" and model.fit.family == "logistic":
        return sigmoid(eta)
    if type not in ("link", "response"):
        raise ValueError("type must be 'link' or 'response'")
    return eta
