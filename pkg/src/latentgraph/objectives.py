"""Self-supervised training objectives built on masked feature prediction.

The shared recipe: encode the clean features, decode them back, and score the
reconstruction; then corrupt the features on a random node subset, encode the
corrupted copy through the same weights, and penalize disagreement between the
two passes. The penalty is the square root of a mean squared difference so it
scales like a norm rather than an energy, and it enters the total weighted by
`alpha`.

Four variants differ in where the disagreement is measured and in how the
reconstruction is scored:

- "mse-embed": squared-error reconstruction; penalty on node embeddings
  (node-level models) or on pooled graph readouts (graph-level models),
  restricted to the corrupted nodes in the node case.
- "mse-output": squared-error reconstruction; penalty on decoder outputs at
  the corrupted rows for both model levels.
- "ce-embed": like "mse-embed" but reconstruction is row-wise softmax cross
  entropy, for corpora whose feature rows are one-hot or otherwise sum to 1.
- "ce-output": cross-entropy reconstruction, and the penalty is the KL
  divergence between softmaxed decoder outputs at the corrupted rows.
"""

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Value, kl_div, mse_per, row_select, scale, softmax_ce, sqrt_eps
from .models import readout_sum

VARIANTS = ("mse-embed", "mse-output", "ce-embed", "ce-output")

_MASK_MODES = ("gaussian", "zeros")


@dataclass(frozen=True)
class MaskSpec:
    """How to pick and corrupt node features.

    ratio: fraction of each graph's nodes to corrupt; every graph contributes
        at least one node.
    noise_sd: standard deviation of the additive Gaussian corruption.
    mode: "gaussian" adds noise to the selected rows, "zeros" blanks them.
    """

    ratio: float = 0.1
    noise_sd: float = 0.5
    mode: str = "gaussian"

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"mask ratio must be in (0, 1], got {self.ratio}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be nonnegative, got {self.noise_sd}")
        if self.mode not in _MASK_MODES:
            raise ValueError(f"mask mode must be one of {_MASK_MODES}, got {self.mode!r}")


def mask_size(num_nodes, ratio):
    """Number of corrupted nodes: ratio of the node count, round half up,
    never below one."""
    if num_nodes < 1:
        raise ValueError("graph must have at least one node")
    return max(1, int(np.floor(ratio * num_nodes + 0.5)))


def sample_mask(num_nodes, feature_dim, spec, rng):
    """Draw the corrupted-node index set and its noise rows for one graph.

    Returns (indices, noise): sorted node indices, and a matrix of additive
    noise aligned with them (all zeros in "zeros" mode, where apply_mask
    blanks the rows instead of adding).
    """
    k = mask_size(num_nodes, spec.ratio)
    indices = np.sort(rng.choice(num_nodes, size=k, replace=False))
    if spec.mode == "gaussian":
        noise = rng.normal(0.0, spec.noise_sd, size=(k, feature_dim))
    else:
        noise = np.zeros((k, feature_dim))
    return indices, noise


def sample_batch_mask(batch, spec, rng):
    """Sample a mask graph by graph and splice the indices into batch-level
    row numbers."""
    all_indices = []
    all_noise = []
    d = batch.features.shape[1]
    for i in range(batch.num_graphs):
        start, end = batch.node_range(i)
        idx, noise = sample_mask(end - start, d, spec, rng)
        all_indices.append(idx + start)
        all_noise.append(noise)
    return np.concatenate(all_indices), np.vstack(all_noise)


def apply_mask(features, indices, noise, mode="gaussian"):
    """Return a corrupted copy of `features`; the original is untouched."""
    out = np.array(features, dtype=float, copy=True)
    if mode == "gaussian":
        out[indices] = out[indices] + noise
    elif mode == "zeros":
        out[indices] = 0.0
    else:
        raise ValueError(f"mask mode must be one of {_MASK_MODES}, got {mode!r}")
    return out


@dataclass
class LossBreakdown:
    """One objective evaluation.

    total: differentiable scalar, equal to reconstruction + alpha * invariance.
    reconstruction: float value of the reconstruction term.
    invariance: float value of the root-mean-square disagreement term, before
        the alpha weighting.
    mask_count: total number of corrupted rows across the batch.
    """

    total: Value
    reconstruction: float
    invariance: float
    mask_count: int


def _reconstruction_term(outputs, batch, variant):
    """Per-graph reconstruction scores averaged over the batch.

    Squared-error variants divide each graph's summed squared error by its
    node count; cross-entropy variants average row-wise softmax cross entropy
    against the (distribution-valued) feature rows.
    """
    use_ce = variant.startswith("ce-")
    total = None
    for i in range(batch.num_graphs):
        start, end = batch.node_range(i)
        rows = np.arange(start, end)
        predicted = row_select(outputs, rows)
        target = batch.features[start:end]
        if use_ce:
            term = softmax_ce(predicted, target)
        else:
            term = mse_per(predicted, Value(target), float(end - start))
        total = term if total is None else engine.add(total, term)
    return scale(total, 1.0 / batch.num_graphs)


def _invariance_term(variant, level, clean_layers, corrupt_layers, clean_out,
                     corrupt_out, batch, indices, eps):
    """Root-mean-square disagreement between the clean and corrupted passes.

    Embedding variants compare last-layer node embeddings at the corrupted
    rows (node level) or pooled readouts (graph level); output variants
    compare decoder outputs at the corrupted rows, by squared error or by KL
    divergence between softmaxed rows.
    """
    denom = float(len(indices))
    if variant == "ce-output":
        raw = kl_div(row_select(clean_out, indices), row_select(corrupt_out, indices))
    elif variant == "mse-output":
        raw = mse_per(row_select(clean_out, indices),
                      row_select(corrupt_out, indices), denom)
    elif level == "node":
        raw = mse_per(row_select(clean_layers[-1], indices),
                      row_select(corrupt_layers[-1], indices), denom)
    else:
        z_clean = readout_sum(clean_layers[-1], batch)
        z_corrupt = readout_sum(corrupt_layers[-1], batch)
        raw = mse_per(z_clean, z_corrupt, denom)
    return sqrt_eps(raw, eps)


def objective(model, batch, spec, rng, alpha, variant="mse-embed",
              training=True, eps=1e-12):
    """Evaluate one masked-prediction objective on a batch.

    Draws a fresh mask from `rng`, runs the clean and corrupted passes, and
    returns a LossBreakdown whose `total` is ready for `engine.backward`.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")

    indices, noise = sample_batch_mask(batch, spec, rng)
    corrupted = apply_mask(batch.features, indices, noise, spec.mode)

    clean_layers = model.encoder.encode(batch, training)
    corrupt_layers = model.encoder.encode(batch, training, features=corrupted)
    clean_out = model.decoder(clean_layers[-1], batch=batch, training=training)

    needs_corrupt_out = variant in ("mse-output", "ce-output")
    corrupt_out = None
    if needs_corrupt_out:
        corrupt_out = model.decoder(corrupt_layers[-1], batch=batch, training=training)

    recon = _reconstruction_term(clean_out, batch, variant)
    inv = _invariance_term(variant, model.level, clean_layers, corrupt_layers,
                           clean_out, corrupt_out, batch, indices, eps)
    total = engine.add(recon, scale(inv, float(alpha)))
    return LossBreakdown(
        total=total,
        reconstruction=recon.data.item(),
        invariance=inv.data.item(),
        mask_count=int(len(indices)),
    )
