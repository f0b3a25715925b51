"""Weight-file format for actor networks.

Layout: magic "SMPW", u32 format version, length-prefixed JSON spec block,
float32 little-endian parameter blocks in declared layer order (dense: W
then b; experts layer: gating matrix, noise matrix, experts 0..n-1), and a
trailing CRC32 of everything between the version field and the checksum.
Save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from . import moe
from .policy_net import ActorSpec, DenseLayer, PolicyNetwork, build_actor
from .tensor_core import Rng

MAGIC = b"SMPW"
VERSION = 1


class WeightFileError(Exception):
    pass


class ChecksumError(WeightFileError):
    pass


class VersionError(WeightFileError):
    pass


class SpecMismatchError(WeightFileError):
    pass


def _param_arrays(net: PolicyNetwork):
    for layer in net.layers:
        if isinstance(layer, moe.MoELayer):
            yield layer.W_g
            yield layer.W_noise
            yield from layer.experts
        else:
            yield layer.W
            yield layer.b


def _spec_dict(spec: ActorSpec) -> dict:
    return {"kind": spec.kind, "hidden": list(spec.hidden), "n": spec.n,
            "k": spec.k, "w_importance": spec.w_importance,
            "expert_out": spec.expert_out, "input_dim": spec.input_dim,
            "output_dim": spec.output_dim, "name": spec.name}


def save_weights(net: PolicyNetwork, path: str) -> None:
    spec_bytes = json.dumps(_spec_dict(net.spec), sort_keys=True).encode()
    payload = struct.pack("<I", len(spec_bytes)) + spec_bytes
    for arr in _param_arrays(net):
        payload += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_weights(path: str, expect_kind: str | None = None,
                 dtype=np.float64) -> PolicyNetwork:
    """Rebuild a network from file; optionally require a specific kind."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise WeightFileError(f"{path}: not a weight file")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise VersionError(f"{path}: format version {version}, expected {VERSION}")
    payload, (crc,) = blob[8:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumError(f"{path}: checksum mismatch, file corrupted")
    (spec_len,) = struct.unpack("<I", payload[:4])
    spec_d = json.loads(payload[4:4 + spec_len].decode())
    spec = ActorSpec(kind=spec_d["kind"], hidden=tuple(spec_d["hidden"]),
                     n=spec_d["n"], k=spec_d["k"],
                     w_importance=spec_d["w_importance"],
                     expert_out=spec_d["expert_out"],
                     input_dim=spec_d["input_dim"],
                     output_dim=spec_d["output_dim"], name=spec_d["name"])
    if expect_kind is not None and spec.kind != expect_kind:
        raise SpecMismatchError(
            f"{path}: holds a {spec.kind!r} network, expected {expect_kind!r}")
    net = build_actor(spec, Rng(0), dtype=dtype)
    offset = 4 + spec_len
    for arr in _param_arrays(net):
        nbytes = arr.size * 4
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise WeightFileError(f"{path}: truncated parameter block")
        arr[...] = np.frombuffer(chunk, dtype="<f4").reshape(arr.shape)
        offset += nbytes
    if offset != len(payload):
        raise WeightFileError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return net
