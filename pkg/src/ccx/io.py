"""Versioned JSON artifacts and CSV matrix dumps."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .convexity import ConstantTable, ConvexityCertificate, Theta, derive_constants
from .errors import SchemaError
from .metric import DiscretePath, FiniteMetricSpace, GeodesicSystem

FORMAT = "ccx/1"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def dumps(kind: str, data, **extra) -> str:
    """Canonical text of an artifact: sorted keys, fixed separators, trailing newline."""
    doc = {"format": FORMAT, "kind": kind, "data": _plain(data)}
    doc.update(_plain(extra))
    return json.dumps(doc, sort_keys=True, indent=1, separators=(",", ": ")) + "\n"


def write(path, kind: str, data, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(kind, data, **extra))
    return path


def loads(text: str, kind: str | None = None) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise SchemaError(f"not a {FORMAT} artifact")
    if kind is not None and doc.get("kind") != kind:
        raise SchemaError(f"expected a {kind!r} artifact, found {doc.get('kind')!r}")
    return doc


def read(path, kind: str | None = None) -> dict:
    return loads(Path(path).read_text(), kind)


# ---------------------------------------------------------------- objects

def space_to_dict(X: FiniteMetricSpace) -> dict:
    d = {"points": list(X.points), "base": X.base, "label": X.label,
         "meta": {k: v for k, v in X.meta.items()}}
    if X.dist is not None:
        d["dist"] = X.dist
    elif X.coords is not None:
        d["coords"], d["norm"] = X.coords, X.norm
    else:
        A, B, ix, iy = X.factors
        d["factors"] = [space_to_dict(A), space_to_dict(B)]
        d["ix"], d["iy"] = ix, iy
    return _plain(d)


def space_from_dict(d: dict) -> FiniteMetricSpace:
    try:
        meta = dict(d.get("meta", {}))
        if "lattice" in meta:
            meta["lattice"] = np.asarray(meta["lattice"], dtype=np.int64)
        if "nominal" in meta:
            meta["nominal"] = tuple(meta["nominal"])
        kw = {}
        if "dist" in d:
            kw["dist"] = np.asarray(d["dist"], dtype=float)
        elif "coords" in d:
            kw["coords"], kw["norm"] = np.asarray(d["coords"], dtype=float), d["norm"]
        else:
            A, B = (space_from_dict(f) for f in d["factors"])
            kw["factors"] = (A, B, np.asarray(d["ix"], dtype=np.int64), np.asarray(d["iy"], dtype=np.int64))
        return FiniteMetricSpace(tuple(d["points"]), d["base"], d.get("label", ""), meta=meta, **kw)
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"bad space record: {e}") from None


def path_to_dict(g: DiscretePath) -> dict:
    return {"values": list(g.values), "step": g.step, "lam": g.lam, "k": g.k, "horizon": g.horizon}


def path_from_dict(d: dict) -> DiscretePath:
    return DiscretePath(tuple(int(v) for v in d["values"]), float(d["step"]), float(d["lam"]),
                        float(d["k"]), None if d.get("horizon") is None else float(d["horizon"]))


def system_to_dict(L: GeodesicSystem) -> dict:
    return _plain({"segments": [path_to_dict(g) for g in L.segments],
                   "rays": [path_to_dict(r) for r in L.rays],
                   "ray_info": list(L.ray_info), "symmetric": L.symmetric,
                   "prefix_closed": L.prefix_closed})


def system_from_dict(d: dict) -> GeodesicSystem:
    try:
        info = []
        for i in d.get("ray_info", []):
            i = dict(i)
            if "provenance" in i:
                i["provenance"] = [(int(a), int(b), float(s)) for a, b, s in i["provenance"]]
            info.append(i)
        return GeodesicSystem(tuple(path_from_dict(g) for g in d["segments"]),
                              tuple(path_from_dict(r) for r in d.get("rays", [])),
                              bool(d.get("symmetric", False)), bool(d.get("prefix_closed", False)),
                              tuple(info))
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"bad system record: {e}") from None


def table_from_dict(d: dict) -> ConstantTable:
    return ConstantTable.from_dict(d)


def certificate_from_dict(d: dict) -> ConvexityCertificate:
    cert = ConvexityCertificate(d["lambda"], d["k"], d["E"], d["C"], Theta.from_dict(d["theta"]),
                                None if d.get("affine_theta") is None else tuple(d["affine_theta"]),
                                d.get("slack", 0.0), d.get("raw_C", d["C"]), d.get("seed", 0),
                                d.get("n_tuples", 0))
    cert.derived = derive_constants(cert)
    return cert


# ---------------------------------------------------------------- conversion

def _matrix_key(data: dict):
    for key in ("dist", "coords", "rho", "d_eps", "prod"):
        if key in data:
            return key
    return None


def json_to_csv(text: str) -> str:
    """Matrix dump: a header line with every other field, then one row per matrix row."""
    doc = loads(text)
    data = dict(doc["data"])
    key = _matrix_key(data)
    if key is None:
        raise SchemaError(f"{doc['kind']!r} artifact has no matrix to dump")
    M = data.pop(key)
    head = dict(doc)
    head["data"] = data
    head["matrix"] = key
    buf = io.StringIO()
    buf.write("# " + json.dumps(head, sort_keys=True, separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for row in M:
        w.writerow([repr(x) if isinstance(x, float) else ("" if x is None else x) for x in row])
    return buf.getvalue()


def _cell(s: str):
    if s == "":
        return None
    if s in ("inf", "-inf", "nan"):
        return s
    f = float(s)
    return int(s) if s.lstrip("-").isdigit() else f


def csv_to_json(text: str) -> str:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise SchemaError("CSV dump is missing its header line")
    try:
        head = json.loads(lines[0][2:])
    except json.JSONDecodeError as e:
        raise SchemaError(f"bad CSV header: {e.msg}") from None
    if head.get("format") != FORMAT:
        raise SchemaError(f"not a {FORMAT} dump")
    key = head.pop("matrix")
    rows = [[_cell(c) for c in r] for r in csv.reader(lines[1:])]
    data = head.pop("data")
    data[key] = rows
    kind = head.pop("kind")
    head.pop("format")
    return dumps(kind, data, **head)


def certificate_table(text: str) -> str:
    """Human-readable listing of a certificate or constant table artifact."""
    doc = loads(text)
    data = doc["data"]
    if doc["kind"] == "certificate":
        rows = [(k, data[k]) for k in ("lambda", "k", "E", "C", "slack", "raw_C", "n_tuples", "seed")]
        table = data.get("derived", {})
    elif doc["kind"] == "constants":
        rows, table = [], data
    else:
        raise SchemaError(f"cannot tabulate a {doc['kind']!r} artifact")
    shown = {k for k, _ in rows} | {"lam"}
    rows += [(k, v) for k, v in sorted(table.items()) if not isinstance(v, dict) and k not in shown]
    width = max(len(k) for k, _ in rows)
    out = [f"{FORMAT} {doc['kind']}"]
    out += [f"{k.ljust(width)}  {v}" for k, v in rows]
    return "\n".join(out) + "\n"


def convert(src, dst) -> Path:
    src, dst = Path(src), Path(dst)
    text = src.read_text()
    if src.suffix == ".json" and dst.suffix == ".csv":
        out = json_to_csv(text)
    elif src.suffix == ".csv" and dst.suffix == ".json":
        out = csv_to_json(text)
    elif src.suffix == ".json" and dst.suffix in (".txt", ".md"):
        out = certificate_table(text)
    elif src.suffix == ".json" and dst.suffix == ".json":
        doc = loads(text)
        rest = {k: v for k, v in doc.items() if k not in ("format", "kind", "data")}
        out = dumps(doc["kind"], doc["data"], **rest)
    else:
        raise SchemaError(f"no conversion from {src.suffix} to {dst.suffix}")
    dst.write_text(out)
    return dst
