"""File formats: MatrixMarket coordinate, dense text, factor files, JSON and CSV."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import scipy.io

from .sampling import LowRankFactors
from .sparsemat import SparseObserved

MM_HEADER = "%%MatrixMarket matrix coordinate real general"


class DataError(ValueError):
    """Input file missing, unreadable or malformed."""


def _num(v: float) -> str:
    return repr(float(v))


def write_mtx(path, a: SparseObserved) -> None:
    """Write 1-based coordinate entries; ``a.meta`` goes into ``% key=value`` comments."""
    lines = [MM_HEADER]
    for key in sorted(a.meta):
        lines.append(f"% {key}={a.meta[key]}")
    lines.append(f"{a.n_rows} {a.n_cols} {a.nnz}")
    lines.extend(f"{i + 1} {j + 1} {_num(v)}"
                 for i, j, v in zip(a.rows.tolist(), a.cols.tolist(), a.values.tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _meta_value(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_mtx(path) -> SparseObserved:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            head = fh.readline().strip()
            meta = {}
            for line in fh:
                if not line.startswith("%"):
                    break
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = _meta_value(value.strip())
        if not head.lower().startswith("%%matrixmarket matrix coordinate"):
            raise DataError(f"{path}: not a MatrixMarket coordinate file")
        coo = scipy.io.mmread(str(path))
        return SparseObserved(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data, meta)
    except DataError:
        raise
    except (OSError, ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_dense(path, a) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    Path(path).write_text(_dense_block(a), encoding="utf-8")


def read_dense(path) -> np.ndarray:
    try:
        return np.atleast_2d(np.loadtxt(path, dtype=np.float64, ndmin=2))
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def _dense_block(a) -> str:
    return "".join(" ".join(_num(v) for v in row) + "\n" for row in a.tolist())


def write_factors(path, f: LowRankFactors) -> None:
    """Three sections headed ``U: m r``, ``sigma: r`` and ``V: n r``."""
    text = (f"U: {f.m} {f.r}\n" + _dense_block(f.U)
            + f"sigma: {f.r}\n" + " ".join(_num(v) for v in f.sigma) + "\n"
            + f"V: {f.n} {f.r}\n" + _dense_block(f.V))
    Path(path).write_text(text, encoding="utf-8")


def read_factors(path) -> LowRankFactors:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        pos = 0

        def section(name, rows):
            nonlocal pos
            head = lines[pos].split()
            if not head or head[0] != f"{name}:":
                raise DataError(f"{path}: expected section '{name}:'")
            dims = [int(t) for t in head[1:]]
            nrows = rows(dims)
            body = lines[pos + 1: pos + 1 + nrows]
            pos += 1 + nrows
            return np.array([[float(t) for t in ln.split()] for ln in body]), dims

        U, (m, r) = section("U", lambda d: d[0])
        sig, _ = section("sigma", lambda d: 1)
        V, (n, _) = section("V", lambda d: d[0])
        return LowRankFactors(U.reshape(m, r), sig.ravel(), V.reshape(n, r))
    except DataError:
        raise
    except (OSError, ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use underscores."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out
