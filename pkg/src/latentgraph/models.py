"""Encoders, decoder heads, batch normalization, readout, initialization.

Layers are small parameter containers whose ``__call__`` builds engine ops, so
gradients flow through the same DAG as every other operation. Batch
normalization is the one custom node: its forward uses batch statistics in
training mode and running statistics in eval mode, and its backward is the
closed-form expression obtained by differentiating through mean and variance.
"""

from __future__ import annotations

import numpy as np

from .engine import Value, add, matmul, relu, spmm

__all__ = [
    "xavier_init",
    "batch_norm",
    "BatchNorm",
    "Linear",
    "GCNLayer",
    "GINLayer",
    "Encoder",
    "Decoder",
    "Model",
    "readout_sum",
    "build_model",
]


def xavier_init(rows, cols, rng):
    """Uniform(-a, a) with a = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ValueError("xavier_init needs positive dimensions")
    a = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols))


def _accumulate(node, g):
    node.grad = g if node.grad is None else node.grad + g


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.9, eps=1e-5):
    """Column-wise batch normalization with affine scale and shift.

    Training mode normalizes with the batch mean and biased batch variance and
    folds them into the running stats in place; eval mode normalizes with the
    running stats only. ``gamma`` and ``beta`` are 1 x q Values.
    """
    if training:
        mu = x.data.mean(axis=0, keepdims=True)
        var = x.data.var(axis=0, keepdims=True)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Value(gamma.data * xhat + beta.data, parents=(x, gamma, beta), op="batch_norm")

    def _back(g):
        _accumulate(gamma, (g * xhat).sum(axis=0, keepdims=True))
        _accumulate(beta, g.sum(axis=0, keepdims=True))
        dxhat = g * gamma.data
        if training:
            n = x.data.shape[0]
            dx = (inv / n) * (
                n * dxhat
                - dxhat.sum(axis=0, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=0, keepdims=True)
            )
        else:
            dx = dxhat * inv
        _accumulate(x, dx)

    out._backward = _back
    return out


class BatchNorm:
    def __init__(self, dim, momentum=0.9, eps=1e-5):
        self.gamma = Value(np.ones((1, dim)))
        self.beta = Value(np.zeros((1, dim)))
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, training):
        return batch_norm(x, self.gamma, self.beta, self.running_mean,
                          self.running_var, training, self.momentum, self.eps)

    def set_identity_stats(self):
        """Make eval mode an exact no-op given unit gamma and zero beta."""
        self.running_mean[:] = 0.0
        self.running_var[:] = 1.0 - self.eps

    def named_parameters(self, prefix):
        return [(f"{prefix}.gamma", self.gamma), (f"{prefix}.beta", self.beta)]

    def named_buffers(self, prefix):
        return [(f"{prefix}.running_mean", self.running_mean),
                (f"{prefix}.running_var", self.running_var)]


class Linear:
    """Affine map x @ W + b; the bias broadcast is a rank-one matmul."""

    def __init__(self, in_dim, out_dim, rng):
        self.W = Value(xavier_init(in_dim, out_dim, rng))
        self.b = Value(np.zeros((1, out_dim)))

    def __call__(self, x):
        ones = Value(np.ones((x.data.shape[0], 1)))
        return add(matmul(x, self.W), matmul(ones, self.b))

    def named_parameters(self, prefix):
        return [(f"{prefix}.W", self.W), (f"{prefix}.b", self.b)]

    def named_buffers(self, prefix):
        return []


class GCNLayer:
    """relu(batchnorm(A_norm @ x @ W + b)) on a normalized adjacency."""

    def __init__(self, in_dim, out_dim, rng, use_bn=True):
        self.lin = Linear(in_dim, out_dim, rng)
        self.bn = BatchNorm(out_dim) if use_bn else None

    def __call__(self, adjacency, h, training):
        z = spmm(adjacency, self.lin(h))
        if self.bn is not None:
            z = self.bn(z, training)
        return relu(z)

    def named_parameters(self, prefix):
        out = self.lin.named_parameters(f"{prefix}.lin")
        if self.bn is not None:
            out += self.bn.named_parameters(f"{prefix}.bn")
        return out

    def named_buffers(self, prefix):
        return [] if self.bn is None else self.bn.named_buffers(f"{prefix}.bn")


class GINLayer:
    """Two-layer MLP on (1 + 0) h + A h, sum aggregation over raw adjacency.

    Each linear map is followed by batch normalization (when enabled) and relu.
    """

    def __init__(self, in_dim, out_dim, rng, use_bn=True):
        self.lin1 = Linear(in_dim, out_dim, rng)
        self.lin2 = Linear(out_dim, out_dim, rng)
        self.bn1 = BatchNorm(out_dim) if use_bn else None
        self.bn2 = BatchNorm(out_dim) if use_bn else None

    def __call__(self, adjacency, h, training):
        agg = add(h, spmm(adjacency, h))
        z = self.lin1(agg)
        if self.bn1 is not None:
            z = self.bn1(z, training)
        z = relu(z)
        z = self.lin2(z)
        if self.bn2 is not None:
            z = self.bn2(z, training)
        return relu(z)

    def named_parameters(self, prefix):
        out = self.lin1.named_parameters(f"{prefix}.lin1")
        out += self.lin2.named_parameters(f"{prefix}.lin2")
        if self.bn1 is not None:
            out += self.bn1.named_parameters(f"{prefix}.bn1")
            out += self.bn2.named_parameters(f"{prefix}.bn2")
        return out

    def named_buffers(self, prefix):
        out = []
        if self.bn1 is not None:
            out += self.bn1.named_buffers(f"{prefix}.bn1")
            out += self.bn2.named_buffers(f"{prefix}.bn2")
        return out


class Encoder:
    """Stack of GCN or GIN layers; ``encode`` returns every layer's output."""

    def __init__(self, kind, feature_dim, hidden_dim, num_layers, rng, use_bn=True):
        if kind not in ("gcn", "gin"):
            raise ValueError(f"unknown encoder kind: {kind!r}")
        if num_layers < 1:
            raise ValueError("encoder needs at least one layer")
        self.kind = kind
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        layer_cls = GCNLayer if kind == "gcn" else GINLayer
        dims = [feature_dim] + [hidden_dim] * num_layers
        self.layers = [
            layer_cls(dims[i], dims[i + 1], rng, use_bn=use_bn)
            for i in range(num_layers)
        ]

    def adjacency_for(self, batch):
        if self.kind == "gcn":
            return batch.normalized_adjacency()
        return batch.block_adjacency

    def encode(self, batch, training, features=None):
        """Run every layer and return the list of per-layer node embeddings.

        `features` optionally replaces `batch.features` as the input matrix,
        which lets callers push corrupted copies of the node features through
        the same graph structure.
        """
        adjacency = self.adjacency_for(batch)
        if features is None:
            h = Value(batch.features)
        elif isinstance(features, Value):
            h = features
        else:
            h = Value(features)
        outputs = []
        for layer in self.layers:
            h = layer(adjacency, h, training)
            outputs.append(h)
        return outputs

    def named_parameters(self, prefix="encoder"):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.named_parameters(f"{prefix}.{i}")
        return out

    def named_buffers(self, prefix="encoder"):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.named_buffers(f"{prefix}.{i}")
        return out


class Decoder:
    """Node-wise MLP head by default; optionally a graph-convolutional head.

    The MLP variant is row-local: output row v depends on input row v only.
    Hidden layers are linear (+ batch norm) + relu; the final layer is linear.
    """

    def __init__(self, in_dim, out_dim, num_layers, rng, use_bn=True, kind="mlp"):
        if kind not in ("mlp", "gcn"):
            raise ValueError(f"unknown decoder kind: {kind!r}")
        if num_layers < 1:
            raise ValueError("decoder needs at least one layer")
        self.kind = kind
        self.in_dim = in_dim
        self.out_dim = out_dim
        dims = [in_dim] + [in_dim] * (num_layers - 1) + [out_dim]
        self.linears = [Linear(dims[i], dims[i + 1], rng) for i in range(num_layers)]
        self.bns = [
            BatchNorm(dims[i + 1]) if (use_bn and i < num_layers - 1) else None
            for i in range(num_layers)
        ]

    def __call__(self, h, batch=None, training=False):
        adjacency = None
        if self.kind == "gcn":
            if batch is None:
                raise ValueError("gcn decoder needs the graph batch")
            adjacency = batch.normalized_adjacency()
        z = h
        last = len(self.linears) - 1
        for i, lin in enumerate(self.linears):
            z = lin(z)
            if adjacency is not None:
                z = spmm(adjacency, z)
            if i < last:
                if self.bns[i] is not None:
                    z = self.bns[i](z, training)
                z = relu(z)
        return z

    def weight_matrices(self):
        return [lin.W.data for lin in self.linears]

    def named_parameters(self, prefix="decoder"):
        out = []
        for i, lin in enumerate(self.linears):
            out += lin.named_parameters(f"{prefix}.{i}")
            if self.bns[i] is not None:
                out += self.bns[i].named_parameters(f"{prefix}.{i}.bn")
        return out

    def named_buffers(self, prefix="decoder"):
        out = []
        for i, bn in enumerate(self.bns):
            if bn is not None:
                out += bn.named_buffers(f"{prefix}.{i}.bn")
        return out


def readout_sum(h, batch):
    """Per-graph column sums of node embeddings: one row per graph."""
    if h.data.shape[0] != batch.total_nodes:
        raise ValueError("embedding rows disagree with batch node count")
    return spmm(batch.pool_matrix(), h)


class Model:
    """Encoder + decoder pair with a declared representation level."""

    def __init__(self, encoder, decoder, level):
        if level not in ("node", "graph"):
            raise ValueError(f"unknown level: {level!r}")
        self.encoder = encoder
        self.decoder = decoder
        self.level = level
        # populated by build_model; checkpointing requires it
        self.build_spec = None

    def named_parameters(self):
        return self.encoder.named_parameters() + self.decoder.named_parameters()

    def named_buffers(self):
        return self.encoder.named_buffers() + self.decoder.named_buffers()

    def parameters(self):
        return [v for _, v in self.named_parameters()]

    def state_arrays(self):
        """All learnable and running-stat arrays, keyed by stable names."""
        out = {name: v.data for name, v in self.named_parameters()}
        for name, buf in self.named_buffers():
            out[name] = buf
        return out

    def parameter_checksum(self):
        acc = 0.0
        for _, v in sorted(self.state_arrays().items()):
            acc += float(np.abs(v).sum())
        return acc


def build_model(level, encoder_kind, feature_dim, hidden_dim, encoder_layers,
                decoder_layers, rng, use_bn=True, decoder_kind="mlp"):
    encoder = Encoder(encoder_kind, feature_dim, hidden_dim, encoder_layers,
                      rng, use_bn=use_bn)
    decoder = Decoder(hidden_dim, feature_dim, decoder_layers, rng,
                      use_bn=use_bn, kind=decoder_kind)
    model = Model(encoder, decoder, level)
    model.build_spec = {
        "level": level,
        "encoder_kind": encoder_kind,
        "feature_dim": feature_dim,
        "hidden_dim": hidden_dim,
        "encoder_layers": encoder_layers,
        "decoder_layers": decoder_layers,
        "use_bn": use_bn,
        "decoder_kind": decoder_kind,
    }
    return model
