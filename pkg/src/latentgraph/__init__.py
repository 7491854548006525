"""Self-supervised graph representation learning toolkit.

A from-scratch reverse-mode autodiff engine drives GCN/GIN encoders trained
with a masked-node reconstruction objective plus an invariance regularizer.
Frozen representations are scored with linear probes, and a Monte-Carlo
laboratory checks the reconstruction bound that motivates the objective on
synthetic graphs whose latent features are known.
"""

from . import bounds, engine, evaluation, graphs, models, objectives, training

__version__ = "0.1.0"

__all__ = [
    "bounds",
    "engine",
    "evaluation",
    "graphs",
    "models",
    "objectives",
    "training",
    "__version__",
]
