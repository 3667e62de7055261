"""Single-file checkpoint format.

Layout: a UTF-8 manifest of `key: value` lines, a `---` separator line, then a
binary tensor section. Each tensor is encoded as

    u16 name length, name bytes (utf-8),
    u8 ndim, u32 per dimension,
    u64 element count, float64 little-endian data.

The manifest embeds the full resolved config (``cfg.<key>`` lines), the episode
counter, the exploration sigma, training counters, per-optimizer step counts,
and the sampling RNG state. No timestamps or host info: saving the same trainer
twice yields byte-identical files, and save -> load -> save round-trips exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, config_lines, parse_config_text
from .errors import CheckpointError

FORMAT_NAME = "auvtrack-checkpoint"
FORMAT_VERSION = 1
_SEPARATOR = b"---\n"


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    data = np.ascontiguousarray(array, dtype=np.float64)
    raw = data.astype("<f8", copy=False).tobytes()
    name_b = name.encode("utf-8")
    parts = [struct.pack("<H", len(name_b)), name_b,
             struct.pack("<B", data.ndim)]
    parts += [struct.pack("<I", d) for d in data.shape]
    parts.append(struct.pack("<Q", data.size))
    parts.append(raw)
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise CheckpointError("truncated tensor section")
        out = self.blob[self.pos:self.pos + count]
        self.pos += count
        return out

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.blob)


def _unpack_tensor(reader: _Reader) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", reader.take(2))
    name = reader.take(name_len).decode("utf-8")
    (ndim,) = struct.unpack("<B", reader.take(1))
    shape = tuple(struct.unpack("<I", reader.take(4))[0] for _ in range(ndim))
    (count,) = struct.unpack("<Q", reader.take(8))
    expected = 1
    for d in shape:
        expected *= d
    if count != expected:
        raise CheckpointError(
            f"tensor {name!r}: count {count} does not match shape {shape}")
    data = np.frombuffer(reader.take(8 * count), dtype="<f8").astype(np.float64)
    return name, data.reshape(shape)


def _net_tensors(prefix: str, params) -> list[tuple[str, np.ndarray]]:
    out = []
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        out.append((f"{prefix}.w{k}", w))
        out.append((f"{prefix}.b{k}", b))
    return out


def _opt_tensors(prefix: str, opt) -> list[tuple[str, np.ndarray]]:
    out = []
    for moment, store in (("m", opt.m), ("v", opt.v)):
        for k, (mw, mb) in enumerate(store):
            out.append((f"{prefix}.{moment}.w{k}", mw))
            out.append((f"{prefix}.{moment}.b{k}", mb))
    return out


def _trainer_tensor_list(trainer) -> list[tuple[str, np.ndarray]]:
    nets = trainer.nets
    tensors: list[tuple[str, np.ndarray]] = []
    for i, (actor, target) in enumerate(zip(nets.actors, nets.actor_targets)):
        tensors += _net_tensors(f"actor{i}", actor)
        tensors += _net_tensors(f"actor_t{i}", target)
    tensors += _net_tensors("encoder", nets.encoder)
    tensors += _net_tensors("gating", nets.gating)
    for i, (critic, target) in enumerate(zip(nets.critics_g, nets.critic_g_targets)):
        tensors += _net_tensors(f"critic_g{i}", critic)
        tensors += _net_tensors(f"critic_g_t{i}", target)
    for i, (critic, target) in enumerate(zip(nets.critics_s, nets.critic_s_targets)):
        tensors += _net_tensors(f"critic_s{i}", critic)
        tensors += _net_tensors(f"critic_s_t{i}", target)
    for i, opt in enumerate(trainer.opt_actors):
        tensors += _opt_tensors(f"opt.actor{i}", opt)
    tensors += _opt_tensors("opt.encoder", trainer.opt_encoder)
    tensors += _opt_tensors("opt.gating", trainer.opt_gating)
    for i, opt in enumerate(trainer.opt_critics_g):
        tensors += _opt_tensors(f"opt.critic_g{i}", opt)
    for i, opt in enumerate(trainer.opt_critics_s):
        tensors += _opt_tensors(f"opt.critic_s{i}", opt)
    return tensors


def _opt_counters(trainer) -> dict[str, list[int]]:
    counters = {f"actor{i}": [opt.step, opt.skipped]
                for i, opt in enumerate(trainer.opt_actors)}
    counters["encoder"] = [trainer.opt_encoder.step, trainer.opt_encoder.skipped]
    counters["gating"] = [trainer.opt_gating.step, trainer.opt_gating.skipped]
    for i, opt in enumerate(trainer.opt_critics_g):
        counters[f"critic_g{i}"] = [opt.step, opt.skipped]
    for i, opt in enumerate(trainer.opt_critics_s):
        counters[f"critic_s{i}"] = [opt.step, opt.skipped]
    return counters


def save_checkpoint(path: str | Path, trainer, episode: int, sigma: float) -> None:
    cfg = trainer.cfg
    tensors = _trainer_tensor_list(trainer)
    lines = [f"format: {FORMAT_NAME}",
             f"version: {FORMAT_VERSION}",
             f"episode: {episode}",
             f"sigma: {float(sigma)!r}",
             f"env_steps: {trainer.counters.env_steps}",
             f"learn_steps: {trainer.counters.learn_steps}",
             f"skipped_updates: {trainer.counters.skipped_updates}",
             "opt_steps: " + json.dumps(_opt_counters(trainer), sort_keys=True),
             "sample_rng: " + json.dumps(
                 trainer.sample_rng.bit_generator.state, sort_keys=True)]
    lines += ["cfg.{}: {}".format(*line.split(" = ", 1))
              for line in config_lines(cfg)]
    lines.append(f"tensors: {len(tensors)}")
    blob = ("\n".join(lines) + "\n").encode("utf-8") + _SEPARATOR
    blob += b"".join(_pack_tensor(name, arr) for name, arr in tensors)
    Path(path).write_bytes(blob)


@dataclass
class CheckpointData:
    config: RunConfig
    manifest: dict[str, str]
    tensors: dict[str, np.ndarray]

    @property
    def episode(self) -> int:
        return int(self.manifest["episode"])

    @property
    def sigma(self) -> float:
        return float(self.manifest["sigma"])


def load_checkpoint(path: str | Path) -> CheckpointData:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    marker = blob.find(b"\n" + _SEPARATOR)
    if marker < 0:
        raise CheckpointError("missing manifest separator")
    manifest_text = blob[:marker + 1].decode("utf-8")
    binary = blob[marker + 1 + len(_SEPARATOR):]

    manifest: dict[str, str] = {}
    cfg_lines: list[str] = []
    for line in manifest_text.splitlines():
        if not line:
            continue
        if ":" not in line:
            raise CheckpointError(f"malformed manifest line {line!r}")
        key, value = line.split(":", 1)
        key, value = key.strip(), value.strip()
        if key.startswith("cfg."):
            cfg_lines.append(f"{key[4:]} = {value}")
        else:
            manifest[key] = value
    if manifest.get("format") != FORMAT_NAME:
        raise CheckpointError(f"not a {FORMAT_NAME} file")
    if manifest.get("version") != str(FORMAT_VERSION):
        raise CheckpointError(
            f"unsupported checkpoint version {manifest.get('version')!r}")

    cfg = RunConfig()
    apply_overrides(cfg, parse_config_text("\n".join(cfg_lines), source=str(path)))
    cfg.validate()

    reader = _Reader(binary)
    declared = int(manifest.get("tensors", "0"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(declared):
        name, arr = _unpack_tensor(reader)
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name!r}")
        tensors[name] = arr
    if not reader.exhausted:
        raise CheckpointError("trailing bytes after last declared tensor")
    return CheckpointData(config=cfg, manifest=manifest, tensors=tensors)


def _restore_net(prefix: str, params, tensors: dict[str, np.ndarray]) -> None:
    for k in range(params.n_layers):
        for tag, store in (("w", params.weights), ("b", params.biases)):
            name = f"{prefix}.{tag}{k}"
            if name not in tensors:
                raise CheckpointError(f"missing tensor {name!r}")
            if tensors[name].shape != store[k].shape:
                raise CheckpointError(
                    f"tensor {name!r}: shape {tensors[name].shape} does not "
                    f"match network shape {store[k].shape}")
            store[k][...] = tensors[name]


def _restore_opt(prefix: str, opt, counters: list[int],
                 tensors: dict[str, np.ndarray]) -> None:
    for moment, store in (("m", opt.m), ("v", opt.v)):
        for k, (mw, mb) in enumerate(store):
            for tag, arr in (("w", mw), ("b", mb)):
                name = f"{prefix}.{moment}.{tag}{k}"
                if name not in tensors:
                    raise CheckpointError(f"missing tensor {name!r}")
                arr[...] = tensors[name]
    opt.step, opt.skipped = counters


def restore_trainer(data: CheckpointData, trainer_cls=None):
    """Build a trainer from a checkpoint; its parameters, Adam moments,
    counters, and sampling RNG all match the saved state exactly."""
    from .marl import Trainer

    cls = trainer_cls or Trainer
    init_rng = np.random.default_rng(0)  # weights are overwritten below
    sample_rng = np.random.default_rng(0)
    trainer = cls(data.config, init_rng, sample_rng)

    nets = trainer.nets
    for i, (actor, target) in enumerate(zip(nets.actors, nets.actor_targets)):
        _restore_net(f"actor{i}", actor, data.tensors)
        _restore_net(f"actor_t{i}", target, data.tensors)
    _restore_net("encoder", nets.encoder, data.tensors)
    _restore_net("gating", nets.gating, data.tensors)
    for i, (critic, target) in enumerate(zip(nets.critics_g, nets.critic_g_targets)):
        _restore_net(f"critic_g{i}", critic, data.tensors)
        _restore_net(f"critic_g_t{i}", target, data.tensors)
    for i, (critic, target) in enumerate(zip(nets.critics_s, nets.critic_s_targets)):
        _restore_net(f"critic_s{i}", critic, data.tensors)
        _restore_net(f"critic_s_t{i}", target, data.tensors)

    opt_steps = json.loads(data.manifest["opt_steps"])
    for i, opt in enumerate(trainer.opt_actors):
        _restore_opt(f"opt.actor{i}", opt, opt_steps[f"actor{i}"], data.tensors)
    _restore_opt("opt.encoder", trainer.opt_encoder, opt_steps["encoder"], data.tensors)
    _restore_opt("opt.gating", trainer.opt_gating, opt_steps["gating"], data.tensors)
    for i, opt in enumerate(trainer.opt_critics_g):
        _restore_opt(f"opt.critic_g{i}", opt, opt_steps[f"critic_g{i}"], data.tensors)
    for i, opt in enumerate(trainer.opt_critics_s):
        _restore_opt(f"opt.critic_s{i}", opt, opt_steps[f"critic_s{i}"], data.tensors)

    trainer.counters.env_steps = int(data.manifest["env_steps"])
    trainer.counters.learn_steps = int(data.manifest["learn_steps"])
    trainer.counters.skipped_updates = int(data.manifest["skipped_updates"])

    rng_state = json.loads(data.manifest["sample_rng"])
    trainer.sample_rng.bit_generator.state = rng_state
    return trainer
