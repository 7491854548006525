"""Optimization loop, run configuration, and checkpoint serialization.

Everything here is deterministic given a seed: the seed fans out through
`numpy.random.SeedSequence` into independent streams for masking, shuffling,
and subgraph sampling, so a rerun with the same config reproduces the same
losses (bit for bit under strict determinism).

Checkpoints are single JSON documents; array payloads are base64-encoded
little-endian float64 bytes, which round-trip exactly.
"""

import base64
import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .engine import backward
from .graphs import sample_node_subset
from .models import build_model
from .objectives import MaskSpec, VARIANTS, objective

CHECKPOINT_FORMAT = "latentgraph-checkpoint"
CHECKPOINT_VERSION = 1

_LEVELS = ("node", "graph")
_ENCODERS = ("gcn", "gin")
_DECODERS = ("mlp", "gcn")


class CheckpointError(Exception):
    """Raised when a checkpoint file is malformed or does not fit the model."""


@dataclass
class TrainConfig:
    """Everything a training run needs besides the data.

    `subgraph_nodes` only applies to node-level runs: when positive, each
    step trains on a freshly sampled induced subgraph of that many nodes
    instead of the full graph.
    """

    level: str = "graph"
    encoder: str = "gin"
    hidden_dim: int = 32
    encoder_layers: int = 3
    decoder_layers: int = 2
    decoder_kind: str = "mlp"
    use_bn: bool = True
    variant: str = "mse-embed"
    alpha: float = 1.0
    mask_ratio: float = 0.1
    noise_sd: float = 0.5
    mask_mode: str = "gaussian"
    lr: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    subgraph_nodes: int = 0

    def validate(self):
        if self.level not in _LEVELS:
            raise ValueError(f"level must be one of {_LEVELS}, got {self.level!r}")
        if self.encoder not in _ENCODERS:
            raise ValueError(f"encoder must be one of {_ENCODERS}, got {self.encoder!r}")
        if self.decoder_kind not in _DECODERS:
            raise ValueError(
                f"decoder_kind must be one of {_DECODERS}, got {self.decoder_kind!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("hidden_dim", "encoder_layers", "decoder_layers",
                     "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.subgraph_nodes < 0:
            raise ValueError(f"subgraph_nodes must be nonnegative, got {self.subgraph_nodes}")
        MaskSpec(self.mask_ratio, self.noise_sd, self.mask_mode)
        return self

    def mask_spec(self):
        return MaskSpec(self.mask_ratio, self.noise_sd, self.mask_mode)


# Frozen hyperparameter bundles. Names describe the corpus shape they were
# tuned for, not any particular dataset.
PRESETS = {
    # small molecule-like graphs: light masking, strong consistency weight
    "molecule": dict(level="graph", encoder="gin", hidden_dim=32,
                     encoder_layers=3, decoder_layers=2, mask_ratio=0.05,
                     noise_sd=0.5, alpha=10.0, lr=1e-5, batch_size=32),
    # larger protein-like graphs: aggressive masking, unit consistency weight
    "protein": dict(level="graph", encoder="gin", hidden_dim=32,
                    encoder_layers=3, decoder_layers=2, mask_ratio=0.3,
                    noise_sd=2.0, alpha=1.0, lr=1e-5, batch_size=32),
    # single large graph with node labels
    "node": dict(level="node", encoder="gcn", hidden_dim=512,
                 encoder_layers=2, decoder_layers=1, mask_ratio=0.05,
                 noise_sd=0.5, alpha=2.0, lr=1e-3),
}


def preset_config(name, **overrides):
    """Build a TrainConfig from a named preset, with keyword overrides."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    kwargs = dict(PRESETS[name])
    kwargs.update(overrides)
    return TrainConfig(**kwargs).validate()


_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(name, text):
    kind = _CONFIG_FIELDS[name]
    text = text.strip()
    if kind == "bool" or kind is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {name!r}: expected a boolean, got {text!r}")
    if kind == "int" or kind is int:
        return int(text)
    if kind == "float" or kind is float:
        return float(text)
    return text


def parse_config(text, base=None):
    """Parse `key = value` lines into a TrainConfig.

    Blank lines and `#` comments are ignored. Unknown keys are an error, as
    are values that do not parse as the field's type.
    """
    config = dataclasses.replace(base) if base is not None else TrainConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_FIELDS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            coerced = _coerce(key, value)
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from exc
        setattr(config, key, coerced)
    return config.validate()


def load_config(path, base=None):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base=base)


class Adam:
    """Adam with decoupled weight decay.

    Decay multiplies each parameter by (1 - lr * weight_decay) using its
    pre-update value, independent of the adaptive step. Parameters that do
    not appear in the gradient map are skipped entirely.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        if lr < 0 or not 0 <= beta1 < 1 or not 0 <= beta2 < 1 or eps <= 0:
            raise ValueError("invalid Adam hyperparameters")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = grads.get(p)
            if g is None:
                continue
            if self.weight_decay:
                p.data = p.data * (1.0 - self.lr * self.weight_decay)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    reconstruction: float
    invariance: float
    steps: int


def _log_step(log_fh, record):
    if log_fh is not None:
        log_fh.write(json.dumps(record, sort_keys=True) + "\n")


def train(model, data, config, log_fh=None, checkpoint_path=None):
    """Run the masked-prediction training loop.

    `data` is a GraphDataset (graph level) or a single Graph (node level).
    Returns per-epoch mean loss statistics. When `log_fh` is given, one JSON
    line per optimization step is written to it. When `checkpoint_path` is
    given, the final weights are saved there.
    """
    from .graphs import Graph, batch_graphs

    config.validate()
    if config.level != model.level:
        raise ValueError(
            f"config level {config.level!r} does not match model level {model.level!r}")
    streams = np.random.SeedSequence(config.seed).spawn(3)
    mask_rng = np.random.default_rng(streams[0])
    shuffle_rng = np.random.default_rng(streams[1])
    subgraph_rng = np.random.default_rng(streams[2])

    optimizer = Adam(model.parameters(), lr=config.lr,
                     weight_decay=config.weight_decay)
    spec = config.mask_spec()

    if config.level == "node":
        if not isinstance(data, Graph):
            raise TypeError("node-level training expects a single Graph")
        step_batches = None
    else:
        if isinstance(data, Graph):
            raise TypeError("graph-level training expects a GraphDataset")
        step_batches = len(data)

    history = []
    for epoch in range(config.epochs):
        losses, recons, invs = [], [], []
        if config.level == "node":
            graph = data
            if 0 < config.subgraph_nodes < graph.num_nodes:
                graph = sample_node_subset(data, config.subgraph_nodes, subgraph_rng)
            batches = [batch_graphs([graph])]
        else:
            order = shuffle_rng.permutation(step_batches)
            batches = [
                batch_graphs([data[i] for i in order[s:s + config.batch_size]])
                for s in range(0, step_batches, config.batch_size)
            ]
        for step, batch in enumerate(batches):
            out = objective(model, batch, spec, mask_rng, config.alpha,
                            config.variant, training=True)
            grads = backward(out.total)
            optimizer.step(grads)
            losses.append(out.total.item())
            recons.append(out.reconstruction)
            invs.append(out.invariance)
            _log_step(log_fh, {
                "epoch": epoch,
                "step": step,
                "loss": losses[-1],
                "reconstruction": recons[-1],
                "invariance": invs[-1],
                "mask_count": out.mask_count,
            })
        history.append(EpochStats(
            epoch=epoch,
            loss=float(np.mean(losses)),
            reconstruction=float(np.mean(recons)),
            invariance=float(np.mean(invs)),
            steps=len(losses),
        ))
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, meta={"epochs": config.epochs,
                                                      "seed": config.seed})
    return history


def _encode_array(arr):
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(data.shape),
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _decode_array(name, entry):
    try:
        shape = tuple(int(s) for s in entry["shape"])
        raw = base64.b64decode(entry["data"], validate=True)
        flat = np.frombuffer(raw, dtype="<f8")
        return flat.reshape(shape).astype(np.float64, copy=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt array entry for {name!r}: {exc}") from exc


def save_checkpoint(model, path, meta=None):
    """Write the model's build recipe and all arrays to a JSON file."""
    if getattr(model, "build_spec", None) is None:
        raise CheckpointError(
            "model has no build_spec; construct it with build_model to checkpoint")
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "build": dict(model.build_spec),
        "meta": dict(meta or {}),
        "arrays": {name: _encode_array(arr)
                   for name, arr in model.state_arrays().items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, expect_level=None):
    """Rebuild a model from a checkpoint file, bit-exactly.

    `expect_level` optionally asserts the checkpoint holds a model of the
    given level ("node" or "graph").
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a valid checkpoint file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a valid checkpoint file: missing format marker")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    build = doc.get("build")
    if not isinstance(build, dict):
        raise CheckpointError("checkpoint is missing its build recipe")
    if expect_level is not None and build.get("level") != expect_level:
        raise CheckpointError(
            f"checkpoint holds a {build.get('level')!r}-level model, "
            f"expected {expect_level!r}")
    try:
        model = build_model(rng=np.random.default_rng(0), **build)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint build recipe is invalid: {exc}") from exc

    stored = doc.get("arrays")
    if not isinstance(stored, dict):
        raise CheckpointError("checkpoint is missing its arrays")
    arrays = {name: _decode_array(name, entry) for name, entry in stored.items()}

    expected = model.state_arrays()
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        raise CheckpointError(
            f"checkpoint arrays do not match the model: missing {missing}, "
            f"unexpected {extra}")
    for name, arr in expected.items():
        loaded = arrays[name]
        if loaded.shape != arr.shape:
            raise CheckpointError(
                f"array {name!r} has shape {loaded.shape}, expected {arr.shape}")

    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    for name, loaded in arrays.items():
        if name in params:
            params[name].data = loaded
        else:
            buffers[name][:] = loaded
    return model, doc.get("meta", {})
