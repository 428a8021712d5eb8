"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Graph`` is an append-only tape: every operation records its kind, the
ids of its operands, and the resulting value.  ``backward`` walks the tape
in reverse and accumulates gradients.  The op set is closed; each op has a
hand-written backward rule, which keeps the whole thing small enough to
test exhaustively against finite differences (see ``grad_check``).

Conventions:
  - vectors are 1-d arrays, matrices are 2-d, everything float64
  - a "scalar" is a vector of size 1 (matvec with a 1-by-d matrix yields one)
  - a graph is built and differentiated by a single thread; distinct graphs
    are independent
"""

from __future__ import annotations

import math
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or infinity."""


def _as_f64(arr) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim > 2:
        raise ShapeError(f"only vectors and matrices are supported, got shape {out.shape}")
    return out


class Graph:
    """Append-only computation tape with reverse-mode differentiation."""

    def __init__(self, check_finite: bool = True):
        self.check_finite = check_finite
        self._kinds: List[str] = []
        self._inputs: List[Tuple[int, ...]] = []
        self._aux: List = []
        self._vals: List[np.ndarray] = []
        self._grads: List = []
        self._leaf_ids: Dict[int, int] = {}
        # per-graph cache of leaf-id tuples for parameter bundles, keyed by
        # the bundle object's identity (bundles outlive the graph)
        self.param_cache: Dict[int, tuple] = {}

    def __len__(self) -> int:
        return len(self._vals)

    # -- node access -----------------------------------------------------

    def value(self, i: int) -> np.ndarray:
        return self._vals[i]

    def kind(self, i: int) -> str:
        return self._kinds[i]

    def grad(self, i: int) -> np.ndarray:
        """Gradient of the last backward seed w.r.t. node i (zeros if unreached)."""
        if not self._grads:
            raise RuntimeError("backward() has not been run on this graph")
        g = self._grads[i]
        return np.zeros_like(self._vals[i]) if g is None else g

    def grad_of(self, arr: np.ndarray) -> np.ndarray:
        """Gradient for a leaf inserted via leaf(arr); zeros if never inserted."""
        i = self._leaf_ids.get(id(arr))
        if i is None:
            return np.zeros_like(np.asarray(arr, dtype=np.float64))
        return self.grad(i)

    def _push(self, kind: str, inputs: Tuple[int, ...], val: np.ndarray, aux=None) -> int:
        # sum() is NaN- and Inf-propagating, so one reduction checks the tensor
        if self.check_finite and not math.isfinite(float(val.sum())):
            raise NonFiniteError(f"op '{kind}' produced a non-finite value")
        self._kinds.append(kind)
        self._inputs.append(inputs)
        self._aux.append(aux)
        self._vals.append(val)
        return len(self._vals) - 1

    # -- leaves ------------------------------------------------------------

    def leaf(self, arr: np.ndarray) -> int:
        """Insert an external array (parameter or constant) as a leaf node.

        Memoized per graph on array identity, so a parameter used many times
        appears once and its gradient accumulates in one place.  The array
        must not be mutated while the graph is alive.
        """
        node = self._leaf_ids.get(id(arr))
        if node is not None:
            return node
        val = _as_f64(arr)
        node = self._push("leaf", (), val)
        self._leaf_ids[id(arr)] = node
        return node

    def constant(self, arr) -> int:
        return self._push("leaf", (), _as_f64(arr))

    # -- ops -----------------------------------------------------------------

    def matvec(self, m: int, v: int) -> int:
        mv, vv = self._vals[m], self._vals[v]
        if mv.ndim != 2 or vv.ndim != 1 or mv.shape[1] != vv.shape[0]:
            raise ShapeError(f"matvec: matrix {mv.shape} does not accept vector {vv.shape}")
        return self._push("matvec", (m, v), np.dot(mv, vv))

    def add(self, a: int, b: int) -> int:
        av, bv = self._vals[a], self._vals[b]
        if av.shape != bv.shape:
            raise ShapeError(f"add: shapes {av.shape} and {bv.shape} differ")
        return self._push("add", (a, b), av + bv)

    def mul(self, a: int, b: int) -> int:
        """Element-wise product; one operand may be a size-1 scalar."""
        av, bv = self._vals[a], self._vals[b]
        if av.shape != bv.shape and av.size != 1 and bv.size != 1:
            raise ShapeError(f"mul: shapes {av.shape} and {bv.shape} differ")
        return self._push("mul", (a, b), av * bv)

    def concat(self, xs: Sequence[int]) -> int:
        if not xs:
            raise ShapeError("concat: empty input")
        vals = [self._vals[x] for x in xs]
        for v in vals:
            if v.ndim != 1:
                raise ShapeError(f"concat: expects vectors, got shape {v.shape}")
        return self._push("concat", tuple(xs), np.concatenate(vals))

    def sum_n(self, xs: Sequence[int]) -> int:
        """Sum of a collection of same-shaped tensors."""
        if not xs:
            raise ShapeError("sum_n: empty input")
        vals = self._vals
        first = vals[xs[0]]
        shape = first.shape
        out = first.copy()
        for x in xs[1:]:
            v = vals[x]
            if v.shape != shape:
                raise ShapeError(f"sum_n: shapes {shape} and {v.shape} differ")
            np.add(out, v, out=out)
        return self._push("sum_n", tuple(xs), out)

    def tanh(self, x: int) -> int:
        return self._push("tanh", (x,), np.tanh(self._vals[x]))

    def sigmoid(self, x: int) -> int:
        return self._push("sigmoid", (x,), expit(self._vals[x]))

    def softmax(self, x: int) -> int:
        xv = self._vals[x]
        if xv.ndim != 1:
            raise ShapeError(f"softmax: expects a vector, got shape {xv.shape}")
        e = np.exp(xv - xv.max())
        e /= e.sum()
        return self._push("softmax", (x,), e)

    def log(self, x: int) -> int:
        xv = self._vals[x]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(xv)
        return self._push("log", (x,), out)

    def embedding(self, table: int, index: int) -> int:
        tv = self._vals[table]
        if tv.ndim != 2:
            raise ShapeError(f"embedding: table must be a matrix, got shape {tv.shape}")
        if not 0 <= index < tv.shape[0]:
            raise ShapeError(f"embedding: index {index} out of range for table {tv.shape}")
        return self._push("embedding", (table,), tv[index].copy(), aux=index)

    def dropout(self, x: int, keep_prob: float, rng: np.random.Generator) -> int:
        """Multiply by a pre-sampled inverted-dropout mask (identity if keep_prob=1)."""
        if not 0.0 < keep_prob <= 1.0:
            raise ValueError(f"dropout: keep_prob must be in (0, 1], got {keep_prob}")
        if keep_prob == 1.0:
            return x
        shape = self._vals[x].shape
        mask = (rng.random(shape) < keep_prob).astype(np.float64) / keep_prob
        return self.mul(x, self.constant(mask))

    # -- backward ------------------------------------------------------------

    def backward(self, seed: int) -> None:
        """Accumulate d(seed)/d(node) for every node feeding the scalar seed."""
        if self._vals[seed].size != 1:
            raise ShapeError(f"backward: seed must be scalar, got shape {self._vals[seed].shape}")
        vals = self._vals
        kinds = self._kinds
        inputs = self._inputs
        grads: List = [None] * len(vals)
        grads[seed] = np.ones_like(vals[seed])

        def acc(j: int, contrib: np.ndarray) -> None:
            if grads[j] is None:
                grads[j] = contrib.copy()
            else:
                grads[j] += contrib

        for i in range(len(vals) - 1, -1, -1):
            g = grads[i]
            if g is None:
                continue
            kind = kinds[i]
            if kind == "leaf":
                continue
            ins = inputs[i]
            if kind == "matvec":
                m, v = ins
                acc(m, np.outer(g, vals[v]))
                acc(v, np.dot(vals[m].T, g))
            elif kind == "add":
                acc(ins[0], g)
                acc(ins[1], g)
            elif kind == "mul":
                a, b = ins
                av, bv = vals[a], vals[b]
                if av.shape == bv.shape:
                    acc(a, g * bv)
                    acc(b, g * av)
                elif av.size == 1:
                    acc(a, np.sum(g * bv).reshape(av.shape))
                    acc(b, g * av)
                else:
                    acc(a, g * bv)
                    acc(b, np.sum(g * av).reshape(bv.shape))
            elif kind == "concat":
                off = 0
                for j in ins:
                    n = vals[j].shape[0]
                    acc(j, g[off:off + n])
                    off += n
            elif kind == "sum_n":
                for j in ins:
                    acc(j, g)
            elif kind == "tanh":
                y = vals[i]
                acc(ins[0], g * (1.0 - y * y))
            elif kind == "sigmoid":
                y = vals[i]
                acc(ins[0], g * y * (1.0 - y))
            elif kind == "softmax":
                y = vals[i]
                acc(ins[0], y * (g - np.dot(g, y)))
            elif kind == "log":
                acc(ins[0], g / vals[ins[0]])
            elif kind == "embedding":
                t = ins[0]
                if grads[t] is None:
                    grads[t] = np.zeros_like(vals[t])
                grads[t][self._aux[i]] += g
            else:  # pragma: no cover
                raise RuntimeError(f"no backward rule for op '{kind}'")
        self._grads = grads


def grad_check(
    build: Callable[[Dict[str, np.ndarray]], Tuple[Graph, int]],
    params: Dict[str, np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``build(params)`` must deterministically construct a graph and return
    ``(graph, loss_node)`` with a scalar loss; any randomness (dropout
    masks, sample order) must be frozen by the caller.  Returns the maximum
    over all parameter entries of

        |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")

    g, loss = build(params)
    if g.value(loss).size != 1:
        raise ShapeError("grad_check: loss must be scalar")
    g.backward(loss)
    analytic = {name: g.grad_of(arr).copy() for name, arr in params.items()}

    def eval_loss() -> float:
        g2, loss2 = build(params)
        return float(g2.value(loss2).reshape(()))

    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = eval_loss()
            flat[i] = orig - eps
            f_minus = eval_loss()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def grad_check_adaptive(
    build: Callable[[Dict[str, np.ndarray]], Tuple[Graph, int]],
    params: Dict[str, np.ndarray],
    eps_values: Tuple[float, ...] = (3e-4, 1e-3, 2e-3, 1e-4),
    tol: float = 1e-4,
) -> float:
    """grad_check with a per-coordinate step-size fallback.

    Central differences trade cancellation noise (shrinks with larger eps)
    against curvature error (shrinks with smaller eps); no single step
    suits every coordinate of a deep model.  Each coordinate keeps its best
    error over the given steps, stopping early once comfortably under
    ``tol``.  A wrong analytic gradient still fails: the numeric estimate
    converges to the true derivative at every step size.
    """
    if not eps_values:
        raise ValueError("eps_values must be nonempty")
    for eps in eps_values:
        if not 0.0 < eps <= 1e-2:
            raise ValueError(f"eps must be in (0, 1e-2], got {eps}")

    g, loss = build(params)
    if g.value(loss).size != 1:
        raise ShapeError("grad_check_adaptive: loss must be scalar")
    g.backward(loss)
    analytic = {name: g.grad_of(arr).copy() for name, arr in params.items()}

    def eval_loss() -> float:
        g2, loss2 = build(params)
        return float(g2.value(loss2).reshape(()))

    settle = 0.3 * tol
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            best = None
            orig = flat[i]
            for eps in eps_values:
                flat[i] = orig + eps
                f_plus = eval_loss()
                flat[i] = orig - eps
                f_minus = eval_loss()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-8)
                best = err if best is None else min(best, err)
                if best < settle:
                    break
            worst = max(worst, best)
    return worst
