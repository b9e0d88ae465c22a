"""Checkpoint file format.

Layout (all integers little-endian):

    8 bytes   magic b"SHRCKPT1"
    u32       format version (1)
    u64       manifest length in bytes
    ...       manifest: utf-8 `key = value` text (model shape + run config)
    u32       section count
    per section:
        u16       name length, then utf-8 parameter name
        u8        ndim
        u64*ndim  dimensions
        f64*      row-major float64 values

Sections appear in the model's canonical parameter order, and the manifest
is written with fixed key order, so identical runs produce byte-identical
files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .manifest import format_kv, parse_kv
from .model import ModelParams, Variant

MAGIC = b"SHRCKPT1"
VERSION = 1


def model_manifest_pairs(params: ModelParams):
    return {
        "model.variant": params.variant.value,
        "model.n_features": params.n_features,
        "model.hidden": params.hidden,
        "model.p_bins": params.p_bins,
        "model.latent": params.latent,
        "model.horizons": params.horizons,
        "model.slope": params.slope,
    }


def save_checkpoint(path, params: ModelParams, extra=None) -> None:
    pairs = model_manifest_pairs(params)
    if extra:
        pairs.update(extra)
    manifest = format_kv(pairs).encode("utf-8")
    named = params.named_parameters()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        fh.write(struct.pack("<I", len(named)))
        for name, tensor in named:
            encoded = name.encode("utf-8")
            arr = np.ascontiguousarray(tensor.values, dtype="<f8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack("<" + "Q" * arr.ndim, *arr.shape))
            fh.write(arr.tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path):
    """Returns (manifest dict, ordered {name: array})."""
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (mlen,) = struct.unpack_from("<Q", buf, 12)
    off = 20
    manifest = parse_kv(buf[off : off + mlen].decode("utf-8"))
    off += mlen
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    sections = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        dims = struct.unpack_from("<" + "Q" * ndim, buf, off)
        off += 8 * ndim
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(dims)
        off += 8 * size
        sections[name] = arr.copy()
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    return manifest, sections


def restore_model(path):
    """Rebuild a ModelParams with the stored shapes and load every section."""
    manifest, sections = load_checkpoint(path)
    try:
        params = ModelParams.init(
            seed=0,  # placeholder; every value is overwritten below
            variant=Variant.parse(manifest["model.variant"]),
            n_features=int(manifest["model.n_features"]),
            hidden=int(manifest["model.hidden"]),
            p_bins=int(manifest["model.p_bins"]),
            latent=int(manifest["model.latent"]),
            horizons=int(manifest["model.horizons"]),
            slope=float(manifest["model.slope"]),
        )
    except KeyError as exc:
        raise CheckpointError(f"{path}: manifest missing {exc}") from None
    named = dict(params.named_parameters())
    if set(named) != set(sections):
        missing = sorted(set(named) ^ set(sections))
        raise CheckpointError(f"{path}: parameter set mismatch near {missing[:3]}")
    for name, tensor in named.items():
        if tensor.values.shape != sections[name].shape:
            raise CheckpointError(
                f"{path}: {name} has shape {sections[name].shape}, "
                f"expected {tensor.values.shape}"
            )
        tensor.values[...] = sections[name]
    return params, manifest
