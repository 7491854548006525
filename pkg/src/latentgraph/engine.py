"""Dense-matrix reverse-mode autodiff engine.

Every value is a 2-D float64 matrix wrapped in a :class:`Value` node. Operations
build a provenance DAG; :func:`backward` walks it once in reverse topological
order and accumulates gradients, so shared subexpressions receive the sum of all
path contributions. The DAG is dropped after backward (no persistent tape).

Scalars are 1x1 matrices. Sparse matrices (:class:`SparseMatrix`) are constants:
they never receive gradients and only appear as the left operand of :func:`spmm`.

A strict deterministic mode replaces the BLAS matrix product with a per-row
GEMV loop whose result does not depend on how rows are later sliced or stacked,
which keeps repeated runs bit-identical regardless of BLAS threading. Enable it
with ``set_strict_determinism(True)`` or the ``LAGRAPH_STRICT_DETERMINISM=1``
environment variable (read once at import).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Value",
    "SparseMatrix",
    "matmul",
    "spmm",
    "add",
    "sub",
    "hadamard",
    "scale",
    "relu",
    "row_select",
    "sum_squares",
    "mse_per",
    "sqrt_eps",
    "softmax_ce",
    "kl_div",
    "backward",
    "zero_grad",
    "grad_check",
    "GradCheckReport",
    "constant",
    "set_strict_determinism",
    "strict_determinism_enabled",
]

_STRICT = os.environ.get("LAGRAPH_STRICT_DETERMINISM", "") == "1"


def set_strict_determinism(flag):
    """Toggle the sequential-reduction matrix product at runtime."""
    global _STRICT
    _STRICT = bool(flag)


def strict_determinism_enabled():
    return _STRICT


def _mm(a, b):
    # Row-by-row GEMV: the result for row i never depends on which other rows
    # are present, unlike the blocked GEMM kernels BLAS picks by shape.
    if not _STRICT:
        return a @ b
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.float64)
    for i in range(a.shape[0]):
        out[i] = a[i] @ b
    return out


def _as_matrix(data):
    a = np.asarray(data, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ValueError(f"expected a scalar, vector or matrix, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


class Value:
    """A matrix node in the autodiff DAG.

    ``data`` is the 2-D float64 payload, ``grad`` the accumulated gradient
    (``None`` until backward reaches the node), ``op`` a short tag naming the
    producing operation, ``_parents`` the input nodes and ``_backward`` a
    closure that routes this node's gradient to them.
    """

    __slots__ = ("data", "grad", "op", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, op="leaf"):
        self.data = _as_matrix(data)
        self.grad = None
        self.op = op
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.shape != (1, 1):
            raise ValueError(f"item() needs a 1x1 value, got shape {self.data.shape}")
        return float(self.data[0, 0])

    def backward(self, retain_graph=False):
        return backward(self, retain_graph=retain_graph)

    def __repr__(self):
        return f"Value(shape={self.data.shape}, op={self.op!r})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Value):
            return hadamard(self, other)
        return scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data):
    """Leaf Value holding fixed data (still receives a gradient if reachable)."""
    return Value(data, op="const")


def _accumulate(node, g):
    node.grad = g if node.grad is None else node.grad + g


def _check_same_shape(a, b, opname):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{opname}: shape mismatch {a.data.shape} vs {b.data.shape}")


def matmul(a, b):
    """Matrix product a @ b with gradients g @ b.T and a.T @ g."""
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: inner dims disagree {a.data.shape} vs {b.data.shape}")
    out = Value(_mm(a.data, b.data), parents=(a, b), op="matmul")

    def _back(g):
        _accumulate(a, _mm(g, b.data.T))
        _accumulate(b, _mm(a.data.T, g))

    out._backward = _back
    return out


def spmm(s, d):
    """Sparse-dense product s @ d. ``s`` is constant and gets no gradient."""
    if not isinstance(s, SparseMatrix):
        raise TypeError("spmm expects a SparseMatrix left operand")
    if s.shape[1] != d.data.shape[0]:
        raise ValueError(f"spmm: inner dims disagree {s.shape} vs {d.data.shape}")
    out = Value(s.matmat(d.data), parents=(d,), op="spmm")

    def _back(g):
        _accumulate(d, s.transpose().matmat(g))

    out._backward = _back
    return out


def add(a, b):
    _check_same_shape(a, b, "add")
    out = Value(a.data + b.data, parents=(a, b), op="add")

    def _back(g):
        _accumulate(a, g)
        _accumulate(b, g)

    out._backward = _back
    return out


def sub(a, b):
    _check_same_shape(a, b, "sub")
    out = Value(a.data - b.data, parents=(a, b), op="sub")

    def _back(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    out._backward = _back
    return out


def hadamard(a, b):
    _check_same_shape(a, b, "hadamard")
    out = Value(a.data * b.data, parents=(a, b), op="hadamard")

    def _back(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    out._backward = _back
    return out


def scale(a, c):
    c = float(c)
    out = Value(a.data * c, parents=(a,), op="scale")

    def _back(g):
        _accumulate(a, g * c)

    out._backward = _back
    return out


def relu(a):
    """Elementwise max(0, x); the derivative at exactly 0 is taken as 0."""
    mask = a.data > 0.0
    out = Value(np.where(mask, a.data, 0.0), parents=(a,), op="relu")

    def _back(g):
        _accumulate(a, g * mask)

    out._backward = _back
    return out


def row_select(h, indices):
    """Gather rows of ``h`` in the given order; gradient scatters back."""
    idx = np.asarray(indices, dtype=np.intp).reshape(-1)
    n = h.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"row_select: index out of range for {n} rows")
    out = Value(h.data[idx], parents=(h,), op="row_select")

    def _back(g):
        gh = np.zeros_like(h.data)
        np.add.at(gh, idx, g)
        _accumulate(h, gh)

    out._backward = _back
    return out


def sum_squares(a):
    """Squared Frobenius norm as a 1x1 Value."""
    out = Value(np.sum(a.data * a.data), parents=(a,), op="sum_squares")

    def _back(g):
        _accumulate(a, (2.0 * g[0, 0]) * a.data)

    out._backward = _back
    return out


def mse_per(a, b, divisor):
    """Sum of squared differences divided by a positive constant."""
    _check_same_shape(a, b, "mse_per")
    divisor = float(divisor)
    if divisor <= 0.0:
        raise ValueError("mse_per: divisor must be positive")
    diff = a.data - b.data
    out = Value(np.sum(diff * diff) / divisor, parents=(a, b), op="mse_per")

    def _back(g):
        gd = (2.0 * g[0, 0] / divisor) * diff
        _accumulate(a, gd)
        _accumulate(b, -gd)

    out._backward = _back
    return out


def sqrt_eps(x, eps=1e-12):
    """sqrt(x + eps) for a nonnegative scalar; eps keeps the slope finite at 0."""
    if x.data.shape != (1, 1):
        raise ValueError("sqrt_eps expects a 1x1 value")
    if x.data[0, 0] < 0.0:
        raise ValueError("sqrt_eps: negative input")
    root = np.sqrt(x.data[0, 0] + eps)
    out = Value(root, parents=(x,), op="sqrt_eps")

    def _back(g):
        _accumulate(x, g * (0.5 / root))

    out._backward = _back
    return out


def _log_softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_ce(logits, targets):
    """Mean row-wise cross-entropy between softmax(logits) and target rows.

    ``targets`` is a constant row-stochastic matrix (one-hot or soft labels).
    """
    t = _as_matrix(targets)
    if t.shape != logits.data.shape:
        raise ValueError(f"softmax_ce: shape mismatch {logits.data.shape} vs {t.shape}")
    if not np.allclose(t.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("softmax_ce: target rows must sum to 1")
    n = logits.data.shape[0]
    logp = _log_softmax(logits.data)
    out = Value(-np.sum(t * logp) / n, parents=(logits,), op="softmax_ce")

    def _back(g):
        _accumulate(logits, (g[0, 0] / n) * (np.exp(logp) - t))

    out._backward = _back
    return out


def kl_div(p_logits, q_logits):
    """Mean row-wise KL(softmax(p_logits) || softmax(q_logits))."""
    _check_same_shape(p_logits, q_logits, "kl_div")
    n = p_logits.data.shape[0]
    lp = _log_softmax(p_logits.data)
    lq = _log_softmax(q_logits.data)
    p = np.exp(lp)
    row_kl = np.sum(p * (lp - lq), axis=1, keepdims=True)
    out = Value(row_kl.sum() / max(n, 1), parents=(p_logits, q_logits), op="kl_div")

    def _back(g):
        gs = g[0, 0] / max(n, 1)
        _accumulate(p_logits, gs * p * ((lp - lq) - row_kl))
        _accumulate(q_logits, gs * (np.exp(lq) - p))

    out._backward = _back
    return out


def _toposort(root):
    order = []
    visited = set()
    stack = [(root, iter(root._parents))]
    on_stack = {id(root)}
    while stack:
        node, parents = stack[-1]
        advanced = False
        for parent in parents:
            if id(parent) not in visited and id(parent) not in on_stack:
                stack.append((parent, iter(parent._parents)))
                on_stack.add(id(parent))
                advanced = True
                break
        if not advanced:
            stack.pop()
            on_stack.discard(id(node))
            visited.add(id(node))
            order.append(node)
    return order


def backward(loss, retain_graph=False):
    """Accumulate gradients of a 1x1 loss into every reachable Value.

    Returns a dict mapping each reachable Value to its gradient array. Unless
    ``retain_graph`` is set, the provenance DAG is cleared afterwards, so a
    second backward needs a fresh forward pass.
    """
    if loss.data.shape != (1, 1):
        raise ValueError(f"backward needs a 1x1 loss, got shape {loss.data.shape}")
    order = _toposort(loss)
    # Interior nodes get a fresh gradient per pass; leaf gradients accumulate
    # across passes until zero_grad, so optimizers see the usual semantics.
    for node in order:
        if node._parents or node.grad is None:
            node.grad = np.zeros_like(node.data)
    _accumulate(loss, np.ones((1, 1), dtype=np.float64))
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
    grads = {node: node.grad for node in order}
    if not retain_graph:
        for node in order:
            node._parents = ()
            node._backward = None
    return grads


def zero_grad(values):
    for v in values:
        v.grad = None


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients to central finite differences.

    The per-coordinate error is |analytic - numeric| / max(1, |analytic|,
    |numeric|): relative for large gradients, absolute near zero, so the
    finite-difference noise floor does not drown tiny true gradients.
    """

    max_rel_err: float
    tol: float
    step: float
    coords_checked: int
    worst_param: int = -1
    worst_coord: int = -1
    worst_analytic: float = 0.0
    worst_numeric: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return self.max_rel_err <= self.tol


def grad_check(f, params, step=1e-3, tol=1e-4):
    """Check analytic gradients of ``f()`` w.r.t. ``params`` coordinate-wise.

    ``f`` rebuilds the loss from the params' current data each call. Central
    differences use the given step; every coordinate is perturbed in place and
    restored. Returns a :class:`GradCheckReport`; ``report.ok`` is the verdict.
    """
    if step <= 0.0:
        raise ValueError("grad_check: step must be positive")
    zero_grad(params)
    loss = f()
    backward(loss)
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    report = GradCheckReport(max_rel_err=0.0, tol=tol, step=step, coords_checked=0)
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        ga = analytic[pi].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = f().item()
            flat[j] = orig - step
            down = f().item()
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            err = abs(ga[j] - numeric) / max(1.0, abs(ga[j]), abs(numeric))
            report.coords_checked += 1
            if err > report.max_rel_err:
                report.max_rel_err = err
                report.worst_param = pi
                report.worst_coord = j
                report.worst_analytic = float(ga[j])
                report.worst_numeric = float(numeric)
            if err > tol:
                report.failures.append((pi, j, float(ga[j]), float(numeric), float(err)))
    zero_grad(params)
    return report


class SparseMatrix:
    """Immutable CSR matrix used for adjacency and pooling indicators.

    Exposes the raw CSR fields (indptr, indices, data); column indices are
    strictly increasing within each row. Products are delegated to scipy.
    """

    __slots__ = ("_csr", "_transpose")

    def __init__(self, csr):
        csr = sp.csr_matrix(csr, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        self._csr = csr
        self._transpose = None

    @classmethod
    def from_dense(cls, a):
        return cls(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    @classmethod
    def from_coo(cls, rows, cols, values, shape):
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        values = np.asarray(values, dtype=np.float64)
        if rows.size and shape[0] > 0 and (rows.min() < 0 or rows.max() >= shape[0]):
            raise IndexError("row index out of range")
        if cols.size and shape[1] > 0 and (cols.min() < 0 or cols.max() >= shape[1]):
            raise IndexError("column index out of range")
        return cls(sp.csr_matrix((values, (rows, cols)), shape=shape))

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, format="csr", dtype=np.float64))

    @property
    def shape(self):
        return self._csr.shape

    @property
    def nnz(self):
        return self._csr.nnz

    @property
    def indptr(self):
        return self._csr.indptr

    @property
    def indices(self):
        return self._csr.indices

    @property
    def data(self):
        return self._csr.data

    def to_dense(self):
        return np.asarray(self._csr.todense(), dtype=np.float64)

    def transpose(self):
        if self._transpose is None:
            self._transpose = SparseMatrix(self._csr.T.tocsr())
        return self._transpose

    def matmat(self, dense):
        out = self._csr @ np.asarray(dense, dtype=np.float64)
        return np.ascontiguousarray(out)

    def __matmul__(self, dense):
        return self.matmat(dense)

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"
