"""Versioned binary container for fitted detectors.

Layout (little endian)::

    b"VADM" | u16 format version | u16 len + algorithm id (ascii)
    | u32 len + JSON header | npz payload (no pickled objects)
"""

from __future__ import annotations

import io
import json
import struct
import zipfile
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..features import ScalingParams
from .base import DetectorConfig, FittedDetector

MAGIC = b"VADM"
FORMAT_VERSION = 1


def dumps(f: FittedDetector) -> bytes:
    arrays = {
        "scaling.mean": f.scaling.mean,
        "scaling.std": f.scaling.std,
        "scaling.zero_std": f.scaling.zero_std,
        "train_matrix": np.asarray(f.train_matrix),
        "train_scores": np.asarray(f.train_scores),
    }
    for key, value in f.model.get_state().items():
        arr = np.asarray(value)
        if arr.dtype == object:
            raise FormatError(f"state field {key!r} is not a plain array")
        arrays[f"state.{key}"] = arr
    buf = io.BytesIO()
    _write_npz(buf, arrays)
    header = json.dumps({"config": f.config.to_dict(), "feature_names": list(f.feature_names)},
                        sort_keys=True).encode()
    algo = f.algorithm.encode("ascii")
    return (MAGIC + struct.pack("<HH", FORMAT_VERSION, len(algo)) + algo
            + struct.pack("<I", len(header)) + header + buf.getvalue())


def _write_npz(fh, arrays: dict) -> None:
    # np.savez stamps entries with the wall clock; fixed timestamps keep output byte-stable
    with zipfile.ZipFile(fh, "w", zipfile.ZIP_STORED) as zf:
        for key in sorted(arrays):
            info = zipfile.ZipInfo(key + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as entry:
                np.lib.format.write_array(entry, np.asarray(arrays[key], order="C"), allow_pickle=False)


def loads(blob: bytes) -> FittedDetector:
    try:
        return _loads(blob)
    except (struct.error, zipfile.BadZipFile, KeyError, ValueError, EOFError, OSError) as exc:
        # ValueError covers JSON and unicode decoding failures too
        raise FormatError(f"corrupt VADM model container: {exc}") from None


def _loads(blob: bytes) -> FittedDetector:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise FormatError("not a VADM model container")
    version, alen = struct.unpack("<HH", blob[4:8])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported VADM format version {version}")
    pos = 8
    algo = blob[pos:pos + alen].decode("ascii")
    pos += alen
    (hlen,) = struct.unpack("<I", blob[pos:pos + 4])
    pos += 4
    header = json.loads(blob[pos:pos + hlen])
    pos += hlen
    config = DetectorConfig.from_dict(header["config"])
    if config.algorithm != algo:
        raise FormatError(f"container says {algo!r} but config says {config.algorithm!r}")
    with np.load(io.BytesIO(blob[pos:]), allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    state = {}
    for key, arr in arrays.items():
        if key.startswith("state."):
            state[key[len("state."):]] = arr.item() if arr.ndim == 0 else arr
    model = config.model_class(seed=config.seed, **config.params)
    model.set_state(state)
    scaling = ScalingParams(arrays["scaling.mean"], arrays["scaling.std"], arrays["scaling.zero_std"])
    train = arrays["train_matrix"]
    scores = arrays["train_scores"]
    train.flags.writeable = False
    scores.flags.writeable = False
    return FittedDetector(config, tuple(header["feature_names"]), scaling, model, train, scores)


def save(f: FittedDetector, path: str | Path) -> None:
    Path(path).write_bytes(dumps(f))


def load(path: str | Path) -> FittedDetector:
    return loads(Path(path).read_bytes())


dump_model = save
load_model = load
