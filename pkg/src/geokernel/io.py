"""On-disk formats: GKD1 trajectory datasets, estimator JSON and CSV exports.

GKD1 layout (little-endian):
    4 bytes   magic b"GKD1"
    uint32    format version
    uint32    header length H
    H bytes   UTF-8 JSON header (manifold, N, K, L, M, T, seed, ambient, meta)
    float64   payload, shape (M, L, 2, N, ambient): positions then velocities
    int32     type labels, shape (N,)
"""
from __future__ import annotations

import csv
import json
import struct

import numpy as np

from .basis import Estimator
from .geometry import ManifoldDescriptor
from .integrate import TrajectoryDataset

MAGIC = b"GKD1"
VERSION = 1
_PRE = struct.Struct("<4sII")


class FormatError(ValueError):
    pass


def dataset_bytes(ds: TrajectoryDataset) -> bytes:
    amb = ds.X.shape[-1]
    header = {
        "manifold": ds.manifold.to_dict(), "N": ds.N, "K": ds.K, "L": ds.L, "M": ds.M,
        "T": ds.T, "seed": ds.seed, "ambient": amb, "meta": ds.meta,
    }
    hb = json.dumps(header, sort_keys=True).encode()
    payload = np.stack([ds.X, ds.V], axis=2).astype("<f8", copy=False)
    return (_PRE.pack(MAGIC, VERSION, len(hb)) + hb + payload.tobytes()
            + np.asarray(ds.types, dtype="<i4").tobytes())


def write_dataset(path, ds: TrajectoryDataset) -> None:
    with open(path, "wb") as f:
        f.write(dataset_bytes(ds))


def parse_dataset(raw: bytes) -> TrajectoryDataset:
    if len(raw) < _PRE.size:
        raise FormatError("file too short for a GKD1 header")
    magic, version, hlen = _PRE.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    start = _PRE.size + hlen
    try:
        h = json.loads(raw[_PRE.size:start].decode())
        M, L, N, amb = int(h["M"]), int(h["L"]), int(h["N"]), int(h["ambient"])
    except (ValueError, KeyError) as exc:
        raise FormatError(f"corrupt header: {exc}") from exc
    nfloat = M * L * 2 * N * amb
    expected = start + 8 * nfloat + 4 * N
    if len(raw) != expected:
        raise FormatError(f"payload size {len(raw)} does not match header ({expected})")
    payload = np.frombuffer(raw, dtype="<f8", count=nfloat, offset=start).reshape(M, L, 2, N, amb)
    types = np.frombuffer(raw, dtype="<i4", count=N, offset=start + 8 * nfloat).astype(np.int64)
    return TrajectoryDataset(
        ManifoldDescriptor.from_dict(h["manifold"]),
        payload[:, :, 0].astype(float), payload[:, :, 1].astype(float),
        types, float(h["T"]), int(h["seed"]), h.get("meta", {}))


def read_dataset(path) -> TrajectoryDataset:
    with open(path, "rb") as f:
        return parse_dataset(f.read())


# --- estimators ------------------------------------------------------------

def estimators_to_dict(manifold, estimators: dict, K: int, reports=None, extra=None) -> dict:
    items = []
    for k in range(1, K + 1):
        for k2 in range(1, K + 1):
            e = estimators.get((k, k2))
            items.append({"k": k, "k2": k2, "estimator": None if e is None else e.to_dict()})
    out = {"format": "geokernel-estimator", "version": 1, "manifold": manifold.to_dict(),
           "K": K, "estimators": items}
    if reports is not None:
        out["reports"] = [r.to_dict() for r in reports]
    if extra:
        out.update(extra)
    return out


def estimators_from_dict(d: dict):
    if d.get("format") != "geokernel-estimator":
        raise FormatError("not an estimator file")
    est = {}
    for item in d["estimators"]:
        e = item["estimator"]
        est[(int(item["k"]), int(item["k2"]))] = None if e is None else Estimator.from_dict(e)
    return ManifoldDescriptor.from_dict(d["manifold"]), int(d["K"]), est


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def read_json(path) -> dict:
    with open(path) as f:
        return json.load(f)


def write_csv(path, header, rows) -> None:
    """One header line naming columns (with units), then the rows."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
