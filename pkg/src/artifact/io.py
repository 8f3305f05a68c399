"""Text formats for observations, sampling distributions, truths and matrices.

Floats are written with ``repr`` so files round-trip exactly and repeated
runs produce identical bytes.
"""

import json
from pathlib import Path

import numpy as np

from .model import Dataset, Dimensions, GroundTruth, SamplingDistribution, ValidationError


def fmt(x) -> str:
    return repr(float(x))


def dumps_json(obj) -> str:
    return json.dumps(plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def plain(obj):
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _read_lines(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    return text.splitlines()


def _parse_header(line, path, fields):
    parts = line.lstrip("#").split()
    if not line.startswith("#") or len(parts) != fields:
        expected = "# m1 m2 n" if fields == 3 else "# m1 m2"
        raise ValidationError(f"{path}: header must be '{expected}'")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ValidationError(f"{path}: header fields must be integers") from None


def _coordinate_body(lines, path, expected):
    rows, cols, vals, meta = [], [], [], {}
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s[1:].strip()
            if body.startswith("meta "):
                meta = json.loads(body[5:])
            continue
        parts = s.split()
        if len(parts) != 3:
            raise ValidationError(f"{path}:{lineno}: expected 'row col value'")
        try:
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: malformed number") from None
    if len(vals) != expected:
        raise ValidationError(f"{path}: header declares {expected} lines but {len(vals)} were found")
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals), meta


def write_observations(path, dataset: Dataset):
    d = dataset.dims
    out = [f"# {d.m1} {d.m2} {dataset.n}"]
    if dataset.provenance:
        out.append("# meta " + json.dumps(plain(dataset.provenance), sort_keys=True))
    out += [f"{j} {k} {fmt(y)}" for j, k, y in dataset.entries()]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_observations(path) -> Dataset:
    lines = _read_lines(path)
    if not lines:
        raise ValidationError(f"{path}: empty observation file")
    m1, m2, n = _parse_header(lines[0], path, 3)
    rows, cols, vals, meta = _coordinate_body(lines, path, n)
    return Dataset(Dimensions(m1, m2), rows, cols, vals, meta)


def write_distribution(path, pi: SamplingDistribution):
    d = pi.dims
    out = [f"# {d.m1} {d.m2} {d.size}", "# meta " + json.dumps({"label": pi.label})]
    out += [f"{j} {k} {fmt(pi.pmf[j, k])}" for j in range(d.m1) for k in range(d.m2)]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_distribution(path) -> SamplingDistribution:
    lines = _read_lines(path)
    if not lines:
        raise ValidationError(f"{path}: empty distribution file")
    m1, m2, n = _parse_header(lines[0], path, 3)
    dims = Dimensions(m1, m2)
    rows, cols, vals, meta = _coordinate_body(lines, path, n)
    pmf = np.full(dims.shape, np.nan)
    if rows.size and (rows.min() < 0 or rows.max() >= m1 or cols.min() < 0 or cols.max() >= m2):
        raise ValidationError(f"{path}: probability index outside dims")
    pmf[rows, cols] = vals
    if np.isnan(pmf).any():
        raise ValidationError(f"{path}: every entry needs a probability (pmf must be strictly positive)")
    return SamplingDistribution(dims, pmf, label=meta.get("label", "file"))


def truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "m1": truth.dims.m1,
        "m2": truth.dims.m2,
        "rank": truth.rank,
        "entry_bound": truth.entry_bound,
        "singular_values": truth.singular_values.tolist(),
        "left_factors": truth.left_factors.tolist(),
        "right_factors": truth.right_factors.tolist(),
    }


def truth_from_dict(d) -> GroundTruth:
    dims = Dimensions(int(d["m1"]), int(d["m2"]))
    r = int(d["rank"])
    U = np.array(d["left_factors"], dtype=float).reshape(dims.m1, r)
    V = np.array(d["right_factors"], dtype=float).reshape(dims.m2, r)
    return GroundTruth(dims, U, np.array(d["singular_values"], dtype=float), V, float(d["entry_bound"]))


def write_truth(path, truth: GroundTruth):
    Path(path).write_text(dumps_json(truth_to_dict(truth)), encoding="utf-8")


def read_truth(path) -> GroundTruth:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
    try:
        return truth_from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: malformed ground truth ({exc})") from None


def write_matrix_csv(path, A, meta=None):
    """Dense row-major CSV with a ``# m1 m2`` header and optional ``# meta {json}`` line."""
    A = np.asarray(A, dtype=float)
    out = [f"# {A.shape[0]} {A.shape[1]}"]
    if meta is not None:
        out.append("# meta " + json.dumps(plain(meta), sort_keys=True))
    out += [",".join(fmt(x) for x in row) for row in A]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_matrix_csv(path):
    lines = _read_lines(path)
    if not lines:
        raise ValidationError(f"{path}: empty matrix file")
    m1, m2 = _parse_header(lines[0], path, 2)
    data = []
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            data.append([float(x) for x in s.split(",")])
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: malformed number") from None
    A = np.array(data, dtype=float)
    if A.shape != (m1, m2):
        raise ValidationError(f"{path}: header declares {m1}x{m2} but body is {A.shape}")
    return A
