"""Single-file model container with bit-exact round-trips.

Layout (all integers little-endian):

    bytes 0..4    magic  b"KBCK"
    bytes 4..8    format version, uint32
    bytes 8..16   header length in bytes, uint64
    header        UTF-8 JSON: vocabularies, config snapshot, rule set,
                  numeric spec, tensor directory, payload SHA-256
    payload       raw tensor bytes, concatenated in directory order

Each tensor directory entry records name, dtype, shape, offset (relative to
the payload start) and byte length.  Parameters are float64 by default so a
save/load cycle reproduces every tensor bitwise; `f32=True` truncates the
payload to float32 for smaller files at the cost of that guarantee.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .model import PoeModel
from .numeric import RelationNumericEntry, RelationNumericSpec
from .rules import MinedRule, PathFormula, RuleSet
from .training import AdamState, Gradients, TrainConfig, config_from_mapping, config_to_mapping

MAGIC = b"KBCK"
VERSION = 1


class CheckpointError(DataError):
    """Base for all checkpoint load/save failures."""


class CheckpointCorruptionError(CheckpointError):
    """The file is truncated or its payload checksum does not match."""


class CheckpointVersionError(CheckpointError):
    """The file declares a format version this code does not support."""


class CheckpointSchemaError(CheckpointError):
    """Tensor names or shapes do not match what the header promises."""


@dataclass
class Checkpoint:
    model: PoeModel
    entity_labels: tuple[str, ...]
    relation_labels: tuple[str, ...]
    feature_labels: tuple[str, ...]
    config: TrainConfig | None = None
    rules: RuleSet | None = None
    numeric_spec: RelationNumericSpec | None = None
    adam: AdamState | None = None


def _rules_to_json(rules: RuleSet | None):
    if rules is None:
        return None
    out = []
    for r in rules.relations:
        for rule in rules.rules_for(r):
            out.append([r, list(rule.formula.relations),
                        list(rule.formula.directions), rule.coverage,
                        rule.support, rule.head_count])
    return out

def _rules_from_json(data) -> RuleSet | None:
    if data is None:
        return None
    rules: dict[int, list[MinedRule]] = {}
    for r, rels, dirs, cov, sup, heads in data:
        rules.setdefault(r, []).append(
            MinedRule(PathFormula(tuple(rels), tuple(dirs)), cov, sup, heads))
    return RuleSet(rules)


def _spec_to_json(spec: RelationNumericSpec | None):
    if spec is None:
        return None
    out = []
    for r in spec.relations:
        e = spec.entry(r)
        out.append([r, list(e.features), list(map(float, e.centers)),
                    list(map(float, e.widths)), list(map(int, e.support))])
    return out

def _spec_from_json(data) -> RelationNumericSpec | None:
    if data is None:
        return None
    entries = {
        r: RelationNumericEntry(tuple(fids), np.array(cs, dtype=np.float64),
                                np.array(ws, dtype=np.float64),
                                np.array(ns, dtype=np.int64))
        for r, fids, cs, ws, ns in data
    }
    return RelationNumericSpec(entries)


def _model_tensors(model: PoeModel) -> list[tuple[str, np.ndarray]]:
    tensors = [("entity_emb", model.entity_emb), ("w_latent", model.w_latent)]
    for r, w in enumerate(model.w_rel):
        if w.size:
            tensors.append((f"w_rel/{r}", w))
    for r, w in enumerate(model.w_num):
        if w.size:
            tensors.append((f"w_num/{r}", w))
    for r, c in enumerate(model.centers):
        if c.size:
            tensors.append((f"rbf_center/{r}", c))
            tensors.append((f"rbf_width/{r}", model.widths[r]))
    return tensors


def _adam_tensors(adam: AdamState) -> list[tuple[str, np.ndarray]]:
    tensors = []
    for kind, grads in (("m", adam.m), ("v", adam.v)):
        for name, arr in grads.arrays():
            if arr.size:
                tensors.append((f"adam_{kind}/{name}", arr))
    return tensors


def save_checkpoint(ckpt: Checkpoint, path, f32: bool = False) -> None:
    dtype = "<f4" if f32 else "<f8"
    tensors = _model_tensors(ckpt.model)
    if ckpt.adam is not None:
        tensors += _adam_tensors(ckpt.adam)

    directory = []
    payload = bytearray()
    for name, arr in tensors:
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        directory.append({"name": name, "dtype": dtype,
                          "shape": list(arr.shape),
                          "offset": len(payload), "nbytes": len(raw)})
        payload += raw

    header = {
        "format_version": VERSION,
        "k": ckpt.model.k,
        "experts": ckpt.model.experts_string(),
        "transform": ckpt.model.transform,
        "entities": list(ckpt.entity_labels),
        "relations": list(ckpt.relation_labels),
        "numeric_features": list(ckpt.feature_labels),
        "config": (config_to_mapping(ckpt.config)
                   if ckpt.config is not None else None),
        "rules": _rules_to_json(ckpt.rules),
        "numeric_spec": _spec_to_json(ckpt.numeric_spec),
        "adam_t": ckpt.adam.t if ckpt.adam is not None else None,
        "tensors": directory,
        "payload_sha256": hashlib.sha256(bytes(payload)).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"),
                      allow_nan=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(VERSION.to_bytes(4, "little"))
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(bytes(payload))


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointCorruptionError(f"truncated checkpoint: {what}")
    return data


def load_checkpoint(path, expect_k: int | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointCorruptionError("not a checkpoint file (bad magic)")
        version = int.from_bytes(_read_exact(fh, 4, "version"), "little")
        if version != VERSION:
            raise CheckpointVersionError(
                f"unsupported checkpoint version {version} (supported: {VERSION})")
        header_len = int.from_bytes(_read_exact(fh, 8, "header length"), "little")
        try:
            header = json.loads(_read_exact(fh, header_len, "header"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointCorruptionError(f"unreadable header: {exc}") from None
        payload = fh.read()

    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise CheckpointCorruptionError("payload checksum mismatch")

    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        name, dtype = entry["name"], entry["dtype"]
        shape = tuple(entry["shape"])
        lo, nbytes = entry["offset"], entry["nbytes"]
        if lo + nbytes > len(payload):
            raise CheckpointCorruptionError(f"tensor {name} overruns payload")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if count * np.dtype(dtype).itemsize != nbytes:
            raise CheckpointSchemaError(f"tensor {name}: shape/bytes mismatch")
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=lo)
        arrays[name] = arr.reshape(shape).astype(np.float64)

    k = header["k"]
    if expect_k is not None and k != expect_k:
        raise CheckpointSchemaError(
            f"entity_emb: checkpoint embedding dim {k}, expected {expect_k}")

    n_ent = len(header["entities"])
    n_rel = len(header["relations"])
    rules = _rules_from_json(header["rules"])
    spec = _spec_from_json(header["numeric_spec"])

    expected = {"entity_emb", "w_latent"}
    rel_dims = {r: (rules.feature_dim(r) if rules else 0) for r in range(n_rel)}
    num_dims = {r: (spec.dim(r) if spec else 0) for r in range(n_rel)}
    for r in range(n_rel):
        if rel_dims[r]:
            expected.add(f"w_rel/{r}")
        if num_dims[r]:
            expected.add(f"w_num/{r}")
            expected.add(f"rbf_center/{r}")
            expected.add(f"rbf_width/{r}")
    if header["adam_t"] is not None:
        base = []
        if n_ent * k:
            base.append("entity_emb")
        if n_rel * k:
            base.append("w_latent")
        base += [f"w_rel/{r}" for r in range(n_rel) if rel_dims[r]]
        base += [f"w_num/{r}" for r in range(n_rel) if num_dims[r]]
        for prefix in ("adam_m", "adam_v"):
            expected |= {f"{prefix}/{name}" for name in base}
    unknown = set(arrays) - expected
    if unknown:
        raise CheckpointSchemaError(f"unknown tensor name: {sorted(unknown)[0]}")
    missing = expected - set(arrays)
    if missing:
        raise CheckpointSchemaError(f"missing tensor: {sorted(missing)[0]}")

    def shaped(name: str, shape: tuple[int, ...]) -> np.ndarray:
        arr = arrays[name]
        if arr.shape != shape:
            raise CheckpointSchemaError(
                f"tensor {name}: stored shape {arr.shape}, expected {shape}")
        return arr

    model = PoeModel(
        entity_emb=shaped("entity_emb", (n_ent, k)),
        w_latent=shaped("w_latent", (n_rel, k)),
        w_rel=[shaped(f"w_rel/{r}", (rel_dims[r],)) if rel_dims[r]
               else np.empty(0) for r in range(n_rel)],
        w_num=[shaped(f"w_num/{r}", (num_dims[r],)) if num_dims[r]
               else np.empty(0) for r in range(n_rel)],
        centers=[shaped(f"rbf_center/{r}", (num_dims[r],)) if num_dims[r]
                 else np.empty(0) for r in range(n_rel)],
        widths=[shaped(f"rbf_width/{r}", (num_dims[r],)) if num_dims[r]
                else np.empty(0) for r in range(n_rel)],
        experts=header["experts"],
        transform=header["transform"],
    )

    adam = None
    if header["adam_t"] is not None:
        def grad_like(prefix: str) -> Gradients:
            return Gradients(
                entity=_adam_array(arrays, f"{prefix}/entity_emb", (n_ent, k)),
                w_latent=_adam_array(arrays, f"{prefix}/w_latent", (n_rel, k)),
                w_rel=[_adam_array(arrays, f"{prefix}/w_rel/{r}", (rel_dims[r],))
                       for r in range(n_rel)],
                w_num=[_adam_array(arrays, f"{prefix}/w_num/{r}", (num_dims[r],))
                       for r in range(n_rel)],
            )
        adam = AdamState(grad_like("adam_m"), grad_like("adam_v"),
                         t=header["adam_t"])

    config = (config_from_mapping(header["config"])
              if header["config"] is not None else None)
    return Checkpoint(
        model=model,
        entity_labels=tuple(header["entities"]),
        relation_labels=tuple(header["relations"]),
        feature_labels=tuple(header["numeric_features"]),
        config=config,
        rules=rules,
        numeric_spec=spec,
        adam=adam,
    )


def _adam_array(arrays: dict[str, np.ndarray], name: str,
                shape: tuple[int, ...]) -> np.ndarray:
    if not int(np.prod(shape, dtype=np.int64)):
        return np.zeros(shape)
    arr = arrays.get(name)
    if arr is None:
        raise CheckpointSchemaError(f"missing tensor: {name}")
    if arr.shape != shape:
        raise CheckpointSchemaError(
            f"tensor {name}: stored shape {arr.shape}, expected {shape}")
    return arr.copy()
