"""Monte-Carlo verification of the masked-prediction error bounds.

This module builds the one setting where the latent features behind a graph
are known exactly, because we generate them: a latent matrix F is drawn from
a prior, the observed features are X = F + noise with element-wise noise
standard deviation bounded by a known sigma, and the topology A is fixed or
Erdos-Renyi. With F in hand, the package's documented bounds become
measurable statements. The three bounds, stated over a predictor f that maps
(A, X) to a matrix shaped like X, with J a random node subset and X~ the
copy of X whose rows J were corrupted:

  theorem1 (output-level):
      E||f(A,X) - F||^2 + E||X - F||^2
        <= E||f(A,X) - X||^2
           + 2 sigma |V| E_J[ sqrt(E||f(A,X)_J - f(A,X~)_J||^2 / |J|) ]

  corollary1 (embedding-level): for f = decode . embed with a decoder that
      is ell-Lipschitz row-wise, the invariance gap above may be measured on
      embeddings instead of outputs, with multiplier 2 sigma |V| ell.

  corollary2 (readout-level): with a pooled readout z = sum of embedding
      rows (treated as k-Lipschitz with k = sqrt(|V|)), the gap may be
      measured on readouts, with multiplier 2 sigma |V| k ell.

The left side minus the observable reconstruction term collapses, draw by
draw, to -2 <f(A,X) - F, X - F>; for a constant predictor that inner product
has mean zero, which turns the bound into an equality up to Monte-Carlo
noise. A related check: a blind predictor (one that only sees the corrupted
copy) has E< f(A,X~)_J - F_J, X_J - F_J > = 0, while feeding the identity the
full input makes that inner product equal the summed noise variance over the
masked entries. Estimates carry delta-method standard errors; the slack of
each bound is required to clear -2 combined SE, and equalities to sit within
3 SE.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .engine import SparseMatrix
from .objectives import mask_size

_GRAPH_MODELS = ("er", "fixed")
_PRIORS = ("gaussian", "uniform")
_MASK_MODES = ("gaussian", "zeros")
_PREDICTOR_KINDS = ("gcn", "gin")


@dataclass(frozen=True)
class SyntheticSetup:
    """Generator configuration for one verification scenario.

    sigma is the element-wise noise-sd upper bound entering the bound's
    multiplier; by construction it is taken from the generator itself and
    must dominate noise_sd.
    """

    num_nodes: int = 16
    feature_dim: int = 4
    graph_model: str = "er"
    edge_prob: float = 0.3
    adjacency: object = None
    prior: str = "gaussian"
    prior_mean: float = 0.0
    prior_scale: float = 1.0
    noise_sd: float = 0.1
    sigma: float = None
    mask_ratio: float = 0.25
    mask_noise_sd: float = 0.5
    mask_mode: str = "gaussian"

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("num_nodes must be at least 1")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be at least 1")
        if self.graph_model not in _GRAPH_MODELS:
            raise ValueError(f"graph_model must be one of {_GRAPH_MODELS}")
        if self.graph_model == "er" and not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError("edge_prob must be in [0, 1]")
        if self.graph_model == "fixed" and self.adjacency is None:
            raise ValueError("fixed graph_model needs an adjacency")
        if self.prior not in _PRIORS:
            raise ValueError(f"prior must be one of {_PRIORS}")
        if self.prior_scale <= 0:
            raise ValueError("prior_scale must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.sigma is not None and self.sigma < self.noise_sd:
            raise ValueError("sigma must dominate the generator's noise_sd")
        if not 0.0 < self.mask_ratio <= 1.0:
            raise ValueError("mask_ratio must be in (0, 1]")
        if self.mask_noise_sd < 0:
            raise ValueError("mask_noise_sd must be nonnegative")
        if self.mask_mode not in _MASK_MODES:
            raise ValueError(f"mask_mode must be one of {_MASK_MODES}")

    @property
    def sigma_bound(self):
        return self.noise_sd if self.sigma is None else self.sigma

    @property
    def mask_count(self):
        return mask_size(self.num_nodes, self.mask_ratio)


def gen_adjacency(setup, rng):
    """Dense symmetric 0/1 adjacency with an empty diagonal."""
    n = setup.num_nodes
    if setup.graph_model == "fixed":
        adj = setup.adjacency
        if isinstance(adj, SparseMatrix):
            adj = adj.to_dense()
        adj = np.asarray(adj, dtype=float)
        if adj.shape != (n, n):
            raise ValueError(f"fixed adjacency shape {adj.shape} != ({n}, {n})")
        return adj
    upper = np.triu(rng.uniform(size=(n, n)) < setup.edge_prob, 1).astype(float)
    return upper + upper.T


def gen_latent_stack(setup, rng, count):
    """Stack of latent feature matrices, shape (count, n, d)."""
    shape = (count, setup.num_nodes, setup.feature_dim)
    if setup.prior == "gaussian":
        return rng.normal(setup.prior_mean, setup.prior_scale, size=shape)
    return rng.uniform(setup.prior_mean - setup.prior_scale,
                       setup.prior_mean + setup.prior_scale, size=shape)


def gen_observation_stack(latent, setup, rng):
    """X = F + zero-mean noise, element-wise sd = noise_sd."""
    if setup.noise_sd == 0.0:
        return latent.copy()
    return latent + rng.normal(0.0, setup.noise_sd, size=latent.shape)


def gen_pair(setup, rng):
    """One draw of (adjacency, latent F, observation X)."""
    adj = gen_adjacency(setup, rng)
    latent = gen_latent_stack(setup, rng, 1)[0]
    observed = gen_observation_stack(latent, setup, rng)
    return adj, latent, observed


def _corrupt_stack(observed, indices, setup, rng):
    """Corrupted copies: rows `indices` of every matrix in the stack get
    fresh noise added (or are blanked in zeros mode)."""
    out = observed.copy()
    if setup.mask_mode == "gaussian":
        noise = rng.normal(0.0, setup.mask_noise_sd,
                           size=(observed.shape[0], len(indices), observed.shape[2]))
        out[:, indices, :] += noise
    else:
        out[:, indices, :] = 0.0
    return out


# ---------------------------------------------------------------------------
# predictors over stacks


def _normalized_adjacency_dense(adj):
    deg = adj.sum(axis=1) + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * (adj + np.eye(adj.shape[0])) * inv_sqrt[None, :]


class StackPredictor:
    """Norm-free message-passing encoder plus MLP head, vectorized over a
    stack of feature matrices.

    Layers: h <- relu(M h W) with M the symmetric-normalized adjacency
    ("gcn") or A + I ("gin"-style sum aggregation). The head applies dense
    layers row-wise with relu between and none after the last, so its
    Lipschitz constant is bounded by the product of weight spectral norms.
    """

    def __init__(self, kind, encoder_weights, decoder_weights):
        if kind not in _PREDICTOR_KINDS:
            raise ValueError(f"kind must be one of {_PREDICTOR_KINDS}")
        if not encoder_weights or not decoder_weights:
            raise ValueError("need at least one encoder and one decoder weight")
        self.kind = kind
        self.encoder_weights = [np.asarray(w, dtype=float) for w in encoder_weights]
        self.decoder_weights = [np.asarray(w, dtype=float) for w in decoder_weights]

    def _mixing_matrix(self, adj):
        if self.kind == "gcn":
            return _normalized_adjacency_dense(adj)
        return adj + np.eye(adj.shape[0])

    def embed(self, adj, x_stack):
        mix = self._mixing_matrix(adj)
        h = x_stack
        for w in self.encoder_weights:
            h = np.maximum(mix @ h @ w, 0.0)
        return h

    def decode(self, h_stack):
        out = h_stack
        for w in self.decoder_weights[:-1]:
            out = np.maximum(out @ w, 0.0)
        return out @ self.decoder_weights[-1]

    def predict(self, adj, x_stack):
        return self.decode(self.embed(adj, x_stack))

    def readout(self, h_stack):
        return h_stack.sum(axis=-2)


def make_random_predictor(feature_dim, hidden_dim, encoder_layers,
                          decoder_layers, kind, rng):
    """Xavier-initialized StackPredictor mapping d -> d features."""

    def xavier(rows, cols):
        bound = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-bound, bound, size=(rows, cols))

    enc_dims = [feature_dim] + [hidden_dim] * encoder_layers
    dec_dims = [hidden_dim] * decoder_layers + [feature_dim]
    return StackPredictor(
        kind,
        [xavier(a, b) for a, b in zip(enc_dims[:-1], enc_dims[1:])],
        [xavier(a, b) for a, b in zip(dec_dims[:-1], dec_dims[1:])],
    )


def constant_predictor(value):
    """Predictor that ignores its input and returns a fixed matrix."""
    value = np.asarray(value, dtype=float)

    def f(adj, x_stack):
        return np.broadcast_to(value, x_stack.shape).copy()

    return f


def identity_predictor():
    def f(adj, x_stack):
        return x_stack.copy()

    return f


# ---------------------------------------------------------------------------
# Lipschitz machinery


def spectral_norm(matrix, tol=1e-6, max_iter=10000):
    """Largest singular value by power iteration on W^T W.

    Deterministic start vector; converges when successive estimates agree to
    relative tolerance. Raises if the cap is hit first.
    """
    w = np.asarray(matrix, dtype=float)
    if w.ndim != 2:
        raise ValueError("spectral_norm expects a 2-D matrix")
    if not np.any(w):
        return 0.0
    gram = w.T @ w
    v = np.ones(gram.shape[0]) / np.sqrt(gram.shape[0])
    previous = 0.0
    for _ in range(max_iter):
        v_next = gram @ v
        norm = np.linalg.norm(v_next)
        if norm == 0.0:
            # start vector lay in the null space; restart off-axis
            v = np.zeros(gram.shape[0])
            v[0] = 1.0
            previous = 0.0
            continue
        v = v_next / norm
        estimate = np.sqrt(v @ gram @ v)
        if abs(estimate - previous) <= tol * max(estimate, 1e-30):
            return float(estimate)
        previous = estimate
    raise RuntimeError(f"power iteration did not converge in {max_iter} steps")


def lipschitz_upper(weights, tol=1e-6, max_iter=10000):
    """Upper bound on the Lipschitz constant of a dense relu network: the
    product of its weight matrices' spectral norms.

    Accepts a list of matrices, a StackPredictor (its head is used), or any
    object exposing weight_matrices().
    """
    if isinstance(weights, StackPredictor):
        mats = weights.decoder_weights
    elif hasattr(weights, "weight_matrices"):
        mats = weights.weight_matrices()
    else:
        mats = list(weights)
    if not mats:
        raise ValueError("no weight matrices given")
    bound = 1.0
    for w in mats:
        bound *= spectral_norm(w, tol=tol, max_iter=max_iter)
    return float(bound)


@dataclass(frozen=True)
class LipschitzBounds:
    """Multiplier ingredients: ell bounds the head, k bounds the readout."""

    ell: float
    k: float = 1.0

    def __post_init__(self):
        if self.ell <= 0 or self.k <= 0:
            raise ValueError("Lipschitz bounds must be positive")


# ---------------------------------------------------------------------------
# bound estimation


@dataclass
class BoundEstimate:
    """One Monte-Carlo evaluation of a bound.

    slack = rhs_mean - lhs_mean; the bound holds when slack is nonnegative
    up to estimator noise (slack >= -2 slack_se). Standard errors come from
    the delta method on the correlated per-draw statistics.
    """

    which: str
    lhs_mean: float
    lhs_se: float
    rhs_mean: float
    rhs_se: float
    slack: float
    slack_se: float
    penalty: float
    n_samples: int
    mask_draws: int

    def as_dict(self):
        return dataclasses.asdict(self)


def _delta_se(columns, grad):
    """SE of grad . column_means via the sample covariance of the columns."""
    columns = np.asarray(columns, dtype=float)
    n = columns.shape[0]
    if n < 2:
        return 0.0
    cov = np.atleast_2d(np.cov(columns, rowvar=False, ddof=1))
    grad = np.asarray(grad, dtype=float)
    return float(np.sqrt(max(grad @ cov @ grad, 0.0) / n))


def _estimate_bound(which, predict, gap_stack, multiplier, setup, n_mc,
                    mask_draws, rng):
    """Shared Monte-Carlo core.

    predict: (adj, x_stack) -> prediction stack, the f whose reconstruction
        errors form both sides of the bound.
    gap_stack: (adj, x_stack, corrupted_stack, indices) -> per-draw summed
        squared invariance gap, an (S,) vector.
    multiplier: the constant in front of E_J[sqrt(gap / |J|)].
    """
    if n_mc < 2:
        raise ValueError("need at least 2 Monte-Carlo draws")
    if mask_draws < 1:
        raise ValueError("need at least 1 mask draw")
    adj = gen_adjacency(setup, rng)
    latent = gen_latent_stack(setup, rng, n_mc)
    observed = gen_observation_stack(latent, setup, rng)
    predicted = predict(adj, observed)
    if predicted.shape != observed.shape:
        raise ValueError(
            f"predictor output shape {predicted.shape} != {observed.shape}")

    axes = (1, 2)
    recon = np.sum((predicted - observed) ** 2, axis=axes)
    to_latent = np.sum((predicted - latent) ** 2, axis=axes)
    noise_energy = np.sum((observed - latent) ** 2, axis=axes)
    lhs_draws = to_latent + noise_energy
    cross = recon - lhs_draws  # equals -2 <f - F, X - F> draw by draw

    k_mask = setup.mask_count
    gap_columns = np.empty((n_mc, mask_draws))
    for m in range(mask_draws):
        indices = np.sort(rng.choice(setup.num_nodes, size=k_mask, replace=False))
        corrupted = _corrupt_stack(observed, indices, setup, rng)
        gap_columns[:, m] = gap_stack(adj, observed, corrupted, indices) / k_mask

    u = gap_columns.mean(axis=0)
    roots = np.sqrt(u)
    penalty = multiplier * roots.mean()

    # gradient of the penalty with respect to each column mean
    with np.errstate(divide="ignore", invalid="ignore"):
        penalty_grad = np.where(roots > 0.0,
                                multiplier / (2.0 * mask_draws * roots), 0.0)

    lhs_mean = float(lhs_draws.mean())
    lhs_se = _delta_se(lhs_draws[:, None], [1.0])
    rhs_mean = float(recon.mean() + penalty)
    rhs_se = _delta_se(np.column_stack([recon, gap_columns]),
                       np.concatenate([[1.0], penalty_grad]))
    slack_se = _delta_se(np.column_stack([cross, gap_columns]),
                         np.concatenate([[1.0], penalty_grad]))
    return BoundEstimate(
        which=which,
        lhs_mean=lhs_mean,
        lhs_se=lhs_se,
        rhs_mean=rhs_mean,
        rhs_se=rhs_se,
        slack=rhs_mean - lhs_mean,
        slack_se=slack_se,
        penalty=float(penalty),
        n_samples=n_mc,
        mask_draws=mask_draws,
    )


def estimate_theorem1(predict, setup, n_mc=512, mask_draws=8, rng=None,
                      penalty_scale=1.0):
    """Estimate both sides of the output-level bound for a predictor.

    `predict` maps (dense adjacency, stack of feature matrices) to a stack
    of predictions. `penalty_scale` is a fault-injection hook for the
    verification harness's negative control; leave it at 1.0.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    cache = {}

    def gap(adj, observed, corrupted, indices):
        if "clean" not in cache:
            cache["clean"] = predict(adj, observed)
        clean = cache["clean"][:, indices, :]
        noisy = predict(adj, corrupted)[:, indices, :]
        return np.sum((clean - noisy) ** 2, axis=(1, 2))

    multiplier = (2.0 * setup.sigma_bound * setup.num_nodes) * penalty_scale
    return _estimate_bound("theorem1", predict, gap, multiplier, setup,
                           n_mc, mask_draws, rng)


def estimate_corollary(level, predictor, setup, bounds=None, n_mc=512,
                       mask_draws=8, rng=None, penalty_scale=1.0):
    """Estimate the embedding-level ("node") or readout-level ("graph")
    bound for an encode/decode predictor.

    When `bounds` is omitted, ell comes from the predictor's head via
    spectral norms and k is sqrt(num_nodes).
    """
    if level not in ("node", "graph"):
        raise ValueError(f"level must be 'node' or 'graph', got {level!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    if bounds is None:
        bounds = LipschitzBounds(ell=lipschitz_upper(predictor),
                                 k=float(np.sqrt(setup.num_nodes)))

    cache = {}

    def clean_embedding(adj, observed):
        if "clean" not in cache:
            cache["clean"] = predictor.embed(adj, observed)
        return cache["clean"]

    if level == "node":
        which = "corollary1"
        multiplier = 2.0 * setup.sigma_bound * setup.num_nodes * bounds.ell

        def gap(adj, observed, corrupted, indices):
            clean = clean_embedding(adj, observed)[:, indices, :]
            noisy = predictor.embed(adj, corrupted)[:, indices, :]
            return np.sum((clean - noisy) ** 2, axis=(1, 2))
    else:
        which = "corollary2"
        multiplier = (2.0 * setup.sigma_bound * setup.num_nodes
                      * bounds.k * bounds.ell)

        def gap(adj, observed, corrupted, indices):
            clean = predictor.readout(clean_embedding(adj, observed))
            noisy = predictor.readout(predictor.embed(adj, corrupted))
            return np.sum((clean - noisy) ** 2, axis=1)

    return _estimate_bound(which, predictor.predict, gap,
                           multiplier * penalty_scale, setup, n_mc,
                           mask_draws, rng)


# ---------------------------------------------------------------------------
# blind-prediction inner product


@dataclass
class InnerProductEstimate:
    """Monte-Carlo mean and SE of <prediction_J - F_J, X_J - F_J>."""

    mean: float
    se: float
    n_samples: int

    def as_dict(self):
        return dataclasses.asdict(self)


def check_dae_inner_product(predict, setup, n_mc=512, mask_draws=8, rng=None,
                            pass_full_input=False):
    """Estimate the correlation between prediction error and observation
    noise on masked rows.

    By default the predictor only receives the corrupted copy, modeling a
    denoising predictor that cannot see the masked rows; the inner product
    then has expectation zero. With `pass_full_input` the predictor sees the
    clean X instead, which is the deliberately leaky control: for the
    identity map the expectation becomes the summed noise variance,
    `dae_identity_expectation(setup)`.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if mask_draws < 1:
        raise ValueError("need at least 1 mask draw")
    chunk = n_mc // mask_draws
    if chunk < 2:
        raise ValueError("n_mc too small for the requested mask draws")
    adj = gen_adjacency(setup, rng)
    values = []
    for _ in range(mask_draws):
        latent = gen_latent_stack(setup, rng, chunk)
        observed = gen_observation_stack(latent, setup, rng)
        indices = np.sort(rng.choice(setup.num_nodes, size=setup.mask_count,
                                     replace=False))
        corrupted = _corrupt_stack(observed, indices, setup, rng)
        inputs = observed if pass_full_input else corrupted
        predicted = predict(adj, inputs)
        err = predicted[:, indices, :] - latent[:, indices, :]
        noise = observed[:, indices, :] - latent[:, indices, :]
        values.append(np.sum(err * noise, axis=(1, 2)))
    values = np.concatenate(values)
    se = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return InnerProductEstimate(mean=float(values.mean()), se=se,
                                n_samples=len(values))


def dae_identity_expectation(setup):
    """Analytic value of the leaky-control inner product for the identity
    predictor: masked rows times feature dim times the noise variance."""
    return setup.mask_count * setup.feature_dim * setup.noise_sd ** 2
