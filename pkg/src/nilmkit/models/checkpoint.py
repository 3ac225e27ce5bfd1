"""Checkpoints: a JSON envelope plus a sidecar of little-endian float64 parameters.

Parameters are written in declaration order: the model itself, then its
feeder chain; for an adversarial pair, the generator then the discriminator.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from nilmkit.data.transforms import NormStats
from nilmkit.errors import ShapeMismatch
from nilmkit.models.network import Network
from nilmkit.models.spec import ModelSpec
from nilmkit.models.training import TrainedModel

FORMAT_VERSION = 1
_LE = np.dtype("<f8")


def _chain(model: TrainedModel) -> list[TrainedModel]:
    out = []
    while model is not None:
        out.append(model)
        model = model.feeder
    return out


def _entry(m: TrainedModel) -> dict:
    return {"spec": m.spec.to_dict(), "normalization": m.stats.to_dict(), "appliance": m.appliance,
            "param_count": m.network.parameter_count(), "training_log": list(m.log)}


def _write(models: list[TrainedModel], path, kind: str, extra: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sidecar = path.with_suffix(".params")
    blob = b"".join(m.network.get_flat().astype(_LE).tobytes() for m in models)
    sidecar.write_bytes(blob)
    envelope = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "models": [_entry(m) for m in models],
        "sidecar": sidecar.name,
        "sidecar_sha256": hashlib.sha256(blob).hexdigest(),
        **extra,
    }
    path.write_text(json.dumps(envelope, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _read(path) -> tuple[dict, list[TrainedModel]]:
    path = Path(path)
    env = json.loads(path.read_text(encoding="utf-8"))
    if env.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {env.get('format_version')!r}")
    blob = (path.parent / env["sidecar"]).read_bytes()
    if hashlib.sha256(blob).hexdigest() != env["sidecar_sha256"]:
        raise ValueError("parameter sidecar does not match its checksum")
    flat = np.frombuffer(blob, dtype=_LE).astype(np.float64)
    models, pos = [], 0
    for e in env["models"]:
        spec = ModelSpec.from_dict(e["spec"])
        net = Network(spec)
        n = e["param_count"]
        if n != net.parameter_count() or pos + n > flat.size:
            raise ShapeMismatch("checkpoint parameters do not fit the stored spec")
        net.set_flat(flat[pos:pos + n])
        pos += n
        models.append(TrainedModel(spec, net, NormStats.from_dict(e["normalization"]), e["appliance"],
                                   list(e.get("training_log", []))))
    if pos != flat.size:
        raise ShapeMismatch("sidecar holds more values than the stored specs declare")
    return env, models


def save_checkpoint(model: TrainedModel, path) -> Path:
    return _write(_chain(model), path, "model", {})


def load_checkpoint(path) -> TrainedModel:
    env, models = _read(path)
    if env["kind"] != "model":
        raise ValueError(f"{path} holds a {env['kind']} checkpoint")
    for a, b in zip(models, models[1:]):
        a.feeder = b
    return models[0]


def save_gan(pair, path) -> Path:
    return _write([pair.generator, pair.discriminator], path, "gan",
                  {"reconstruction_weight": pair.reconstruction_weight})


def load_gan(path):
    from nilmkit.models.gan import GanPair

    env, (gen, disc) = _read(path)
    if env["kind"] != "gan":
        raise ValueError(f"{path} holds a {env['kind']} checkpoint")
    return GanPair(gen, disc, env["reconstruction_weight"])


def load_any(path):
    kind = json.loads(Path(path).read_text(encoding="utf-8")).get("kind")
    return load_gan(path) if kind == "gan" else load_checkpoint(path)
