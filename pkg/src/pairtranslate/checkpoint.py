"""Checkpoint archive format.

A checkpoint is an uncompressed zip with fixed timestamps, so identical state
gives identical bytes.  Entries:

* ``meta.json`` -- format tag, version, the nested state tree with tensors
  replaced by references, and a SHA-256 per tensor entry.
* ``tensors/<hierarchical.name>.npy`` -- one array per tensor, in tree order.

Nested containers are encoded so key types survive JSON: dicts become
``{"__dict__": [[key, value], ...]}`` and tuples ``{"__tuple__": [...]}``.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import zipfile
from pathlib import Path

import numpy as np
import torch

from pairtranslate.errors import IntegrityError

FORMAT = "pairtranslate-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    return buf.getvalue()


def _encode(obj, prefix: str, blobs: dict):
    if isinstance(obj, torch.Tensor):
        name = prefix
        blobs[name] = _npy_bytes(obj.detach().cpu().numpy())
        return {"__tensor__": name}
    if isinstance(obj, np.ndarray):
        blobs[prefix] = _npy_bytes(obj)
        return {"__ndarray__": prefix}
    if isinstance(obj, dict):
        return {"__dict__": [[k, _encode(v, f"{prefix}.{k}" if prefix else str(k), blobs)] for k, v in obj.items()]}
    if isinstance(obj, tuple):
        return {"__tuple__": [_encode(v, f"{prefix}.{i}", blobs) for i, v in enumerate(obj)]}
    if isinstance(obj, list):
        return [_encode(v, f"{prefix}.{i}", blobs) for i, v in enumerate(obj)]
    if isinstance(obj, (np.integer, np.floating, np.bool_)):
        return obj.item()
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__} at {prefix!r}")


def _decode(obj, arrays: dict):
    if isinstance(obj, list):
        return [_decode(v, arrays) for v in obj]
    if isinstance(obj, dict):
        if "__tensor__" in obj:
            return torch.from_numpy(arrays[obj["__tensor__"]].copy())
        if "__ndarray__" in obj:
            return arrays[obj["__ndarray__"]].copy()
        if "__dict__" in obj:
            return {k: _decode(v, arrays) for k, v in obj["__dict__"]}
        if "__tuple__" in obj:
            return tuple(_decode(v, arrays) for v in obj["__tuple__"])
        raise IntegrityError(f"unknown tree node {sorted(obj)}")
    return obj


def write_archive(tree: dict, path) -> None:
    """Serialise ``tree`` to ``path`` atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blobs: dict[str, bytes] = {}
    encoded = _encode(tree, "", blobs)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "tree": encoded,
        "checksums": {name: hashlib.sha256(data).hexdigest() for name, data in blobs.items()},
    }
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(zipfile.ZipInfo("meta.json", _EPOCH), json.dumps(meta, sort_keys=True))
        for name, data in blobs.items():
            zf.writestr(zipfile.ZipInfo(f"tensors/{name}.npy", _EPOCH), data)
    os.replace(tmp, path)


def read_archive(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise IntegrityError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("format") != FORMAT:
                raise IntegrityError(f"{path}: not a {FORMAT} archive")
            if meta.get("version") != VERSION:
                raise IntegrityError(f"{path}: unsupported version {meta.get('version')}")
            arrays = {}
            for name, expected in meta["checksums"].items():
                data = zf.read(f"tensors/{name}.npy")
                got = hashlib.sha256(data).hexdigest()
                if got != expected:
                    raise IntegrityError(
                        f"{path}: checksum mismatch for {name}: expected sha256 {expected}, got {got}"
                    )
                arrays[name] = np.load(io.BytesIO(data), allow_pickle=False)
    except IntegrityError:
        raise
    except (zipfile.BadZipFile, KeyError, ValueError, EOFError, OSError) as exc:
        raise IntegrityError(f"{path}: corrupt checkpoint ({type(exc).__name__}: {exc})") from exc
    return _decode(meta["tree"], arrays)
