"""Dense float64 tensors with tape-based reverse-mode differentiation.

A :class:`Graph` records every operation applied to tensors that depend on a
trainable parameter.  Calling :meth:`Graph.backward` walks the tape in reverse
and accumulates gradients into the :class:`ParamStore` that owns the leaves.

Log-probabilities may legitimately be ``-inf`` (zero-probability events), so
the finiteness guard rejects NaN and ``+inf`` only.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or +inf."""


class ParamStore:
    """Named trainable arrays with gradient buffers of identical shape."""

    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self.values:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=DTYPE)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for name, value in self.values.items():
            other.add(name, value.copy())
        return other

    def num_scalars(self) -> int:
        return sum(v.size for v in self.values.values())


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Tensor:
    __slots__ = ("data", "graph", "parents", "backward_fn", "op", "index", "name")

    def __init__(self, data, graph=None, parents=(), backward_fn=None, op="const", name=None):
        self.data = data
        self.graph = graph
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.index = -1
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def requires_grad(self) -> bool:
        return self.index >= 0

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def _g(self, other) -> "Graph":
        if self.graph is not None:
            return self.graph
        if isinstance(other, Tensor) and other.graph is not None:
            return other.graph
        raise ValueError("tensor is not attached to a graph")

    def __add__(self, other):
        return self._g(other).add(self, other)

    def __radd__(self, other):
        return self._g(other).add(other, self)

    def __sub__(self, other):
        return self._g(other).sub(self, other)

    def __rsub__(self, other):
        return self._g(other).sub(other, self)

    def __mul__(self, other):
        return self._g(other).mul(self, other)

    def __rmul__(self, other):
        return self._g(other).mul(other, self)

    def __neg__(self):
        return self._g(None).neg(self)

    def __matmul__(self, other):
        return self._g(other).matmul(self, other)

    def __getitem__(self, idx):
        return self._g(None).index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return self._g(None).sum(self, axis, keepdims)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _safe_max(x: np.ndarray, axis) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return np.where(np.isfinite(m), m, 0.0)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


class Graph:
    """A define-by-run tape.

    ``train`` enables dropout; ``record=False`` turns the graph into a pure
    forward evaluator (no tape, no gradients).
    """

    def __init__(self, params: ParamStore | None = None, train: bool = False,
                 seed: int | None = 0, record: bool = True):
        self.params = params
        self.train = train
        self.record = record
        self.rng = np.random.default_rng(seed)
        self.nodes: list[Tensor] = []
        self._leaves: dict[str, Tensor] = {}

    # -- leaves ---------------------------------------------------------
    def param(self, name: str) -> Tensor:
        leaf = self._leaves.get(name)
        if leaf is None:
            if self.params is None or name not in self.params:
                raise KeyError(f"unbound parameter {name!r}")
            leaf = Tensor(self.params[name], self, op="param", name=name)
            if self.record:
                leaf.index = len(self.nodes)
                self.nodes.append(leaf)
            self._leaves[name] = leaf
        return leaf

    def const(self, value) -> Tensor:
        if isinstance(value, Tensor):
            return value
        return Tensor(np.asarray(value, dtype=DTYPE), self)

    def _wrap(self, x) -> Tensor:
        if isinstance(x, Tensor):
            return x
        return Tensor(np.asarray(x, dtype=DTYPE), self)

    def _make(self, op: str, data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
        if not np.isfinite(data).all():
            if np.isnan(data).any() or np.isposinf(data).any():
                shapes = ", ".join(str(p.shape) for p in parents)
                raise NonFiniteError(f"non-finite output from op {op!r} (node {len(self.nodes)}; input shapes {shapes})")
        out = Tensor(data, self, tuple(parents), backward_fn, op)
        if self.record and any(p.index >= 0 for p in parents):
            out.index = len(self.nodes)
            self.nodes.append(out)
        return out

    # -- elementwise ----------------------------------------------------
    def add(self, a, b) -> Tensor:
        a, b = self._wrap(a), self._wrap(b)
        sa, sb = a.shape, b.shape
        return self._make("add", a.data + b.data, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a, b) -> Tensor:
        a, b = self._wrap(a), self._wrap(b)
        sa, sb = a.shape, b.shape
        return self._make("sub", a.data - b.data, (a, b),
                          lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))

    def mul(self, a, b) -> Tensor:
        a, b = self._wrap(a), self._wrap(b)
        ad, bd = a.data, b.data
        return self._make("mul", ad * bd, (a, b),
                          lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))

    def neg(self, a) -> Tensor:
        return self._make("neg", -a.data, (a,), lambda g: (-g,))

    def sigmoid(self, a) -> Tensor:
        s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
        return self._make("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))

    def log_sigmoid(self, a) -> Tensor:
        x = a.data
        out = -np.logaddexp(0.0, -x)
        return self._make("log_sigmoid", out, (a,), lambda g: (g * (1.0 - np.exp(out)),))

    def tanh(self, a) -> Tensor:
        t = np.tanh(a.data)
        return self._make("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))

    def exp(self, a) -> Tensor:
        e = np.exp(a.data)
        return self._make("exp", e, (a,), lambda g: (g * e,))

    def log(self, a) -> Tensor:
        x = a.data
        with np.errstate(divide="ignore"):
            out = np.log(x)

        def back(g):
            return (np.divide(g, x, out=np.zeros_like(g), where=x != 0),)

        return self._make("log", out, (a,), back)

    # -- linear algebra -------------------------------------------------
    def matmul(self, a, b) -> Tensor:
        a, b = self._wrap(a), self._wrap(b)
        ad, bd = a.data, b.data
        try:
            out = np.matmul(ad, bd)
        except ValueError as exc:
            raise ValueError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}") from exc

        def back(g):
            A = ad if ad.ndim > 1 else ad[None, :]
            B = bd if bd.ndim > 1 else bd[:, None]
            G = g
            if ad.ndim == 1:
                G = np.expand_dims(G, -2)
            if bd.ndim == 1:
                G = np.expand_dims(G, -1)
            ga = _unbroadcast(np.matmul(G, np.swapaxes(B, -1, -2)), A.shape)
            if B.ndim == 2 and A.ndim > 2:
                gb = A.reshape(-1, A.shape[-1]).T @ G.reshape(-1, G.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(A, -1, -2), G), B.shape)
            return ga.reshape(ad.shape), gb.reshape(bd.shape)

        return self._make("matmul", out, (a, b), back)

    def transpose(self, a, axes: Sequence[int]) -> Tensor:
        inv = np.argsort(axes)
        return self._make("transpose", np.transpose(a.data, axes), (a,),
                          lambda g: (np.transpose(g, inv),))

    def reshape(self, a, shape) -> Tensor:
        old = a.shape
        return self._make("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))

    # -- reductions -----------------------------------------------------
    def sum(self, a, axis=None, keepdims=False) -> Tensor:
        shape = a.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self._make("sum", np.sum(a.data, axis=axis, keepdims=keepdims), (a,), back)

    def logsumexp(self, a, axis=-1) -> Tensor:
        x = a.data
        m = _safe_max(x, axis)
        with np.errstate(divide="ignore"):
            s = np.sum(np.exp(x - m), axis=axis, keepdims=True)
            lse = np.log(s) + m
        out = np.squeeze(lse, axis=axis)

        def back(g):
            w = np.exp(x - lse) if np.isfinite(lse).all() else np.nan_to_num(np.exp(x - lse))
            return (np.expand_dims(g, axis) * w,)

        return self._make("logsumexp", out, (a,), back)

    def softmax(self, a, axis=-1) -> Tensor:
        x = a.data
        e = np.exp(x - _safe_max(x, axis))
        p = e / e.sum(axis=axis, keepdims=True)
        return self._make("softmax", p, (a,),
                          lambda g: (p * (g - (g * p).sum(axis=axis, keepdims=True)),))

    def log_softmax(self, a, axis=-1) -> Tensor:
        x = a.data
        z = x - _safe_max(x, axis)
        with np.errstate(divide="ignore"):
            out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
        p = np.exp(out)
        return self._make("log_softmax", out, (a,),
                          lambda g: (g - p * g.sum(axis=axis, keepdims=True),))

    # -- structure ------------------------------------------------------
    def concat(self, xs: Sequence, axis=-1) -> Tensor:
        xs = [self._wrap(x) for x in xs]
        sizes = [x.shape[axis] for x in xs]
        splits = np.cumsum(sizes)[:-1]
        return self._make("concat", np.concatenate([x.data for x in xs], axis=axis), xs,
                          lambda g: tuple(np.split(g, splits, axis=axis)))

    def stack(self, xs: Sequence, axis=0) -> Tensor:
        xs = [self._wrap(x) for x in xs]
        n = len(xs)

        def back(g):
            return tuple(np.take(g, i, axis=axis) for i in range(n))

        return self._make("stack", np.stack([x.data for x in xs], axis=axis), xs, back)

    def index(self, a, idx) -> Tensor:
        shape = a.shape
        basic = _is_basic_index(idx)

        def back(g):
            full = np.zeros(shape, dtype=DTYPE)
            if basic:
                full[idx] += g
            else:
                np.add.at(full, idx, g)
            return (full,)

        return self._make("index", a.data[idx], (a,), back)

    def gather(self, table, ids) -> Tensor:
        """Embedding lookup: rows of ``table`` selected by integer ``ids``."""
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise IndexError(f"gather: id out of range for table with {table.shape[0]} rows")
        shape = table.shape

        def back(g):
            full = np.zeros(shape, dtype=DTYPE)
            np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[-1]))
            return (full,)

        return self._make("gather", table.data[ids], (table,), back)

    def pick(self, a, idx, axis=-1) -> Tensor:
        """``take_along_axis``; an index with one axis fewer than ``a`` drops that axis."""
        idx = np.asarray(idx)
        squeeze = idx.ndim == a.ndim - 1
        if squeeze:
            idx = np.expand_dims(idx, axis)
        shape = a.shape

        def back(g):
            full = np.zeros(shape, dtype=DTYPE)
            g = np.expand_dims(g, axis) if squeeze else g
            # put_along_axis overwrites duplicates; accumulate explicitly
            if squeeze:
                np.put_along_axis(full, idx, g, axis=axis)
            else:
                ax = axis % len(shape)
                grids = list(np.indices(idx.shape, sparse=True))
                grids[ax] = idx
                np.add.at(full, tuple(grids), g)
            return (full,)

        out = np.take_along_axis(a.data, idx, axis=axis)
        return self._make("pick", np.squeeze(out, axis) if squeeze else out, (a,), back)

    def dropout(self, a, p: float) -> Tensor:
        if not self.train or p <= 0.0:
            return a
        keep = (self.rng.random(a.shape) >= p) / (1.0 - p)
        return self._make("dropout", a.data * keep, (a,), lambda g: (g * keep,))

    # -- backward -------------------------------------------------------
    def backward(self, output: Tensor, seed=None) -> dict[str, np.ndarray]:
        """Accumulate d(output)/d(param), contracted with ``seed``, into the store."""
        if not self.record or output.graph is not self or not self.nodes:
            raise RuntimeError("backward called before a recorded forward pass on this graph")
        if output.index < 0:
            raise RuntimeError("output does not depend on any parameter")
        seed = np.ones_like(output.data) if seed is None else np.asarray(seed, dtype=DTYPE)
        if seed.shape != output.shape:
            raise ValueError(f"seed shape {seed.shape} != output shape {output.shape}")
        grads: dict[int, np.ndarray] = {output.index: seed}
        for node in reversed(self.nodes[: output.index + 1]):
            g = grads.pop(node.index, None)
            if g is None:
                continue
            if node.op == "param":
                self.params.grads[node.name] += g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if parent.index < 0:
                    continue
                prev = grads.get(parent.index)
                grads[parent.index] = pg if prev is None else prev + pg
        return self.params.grads


def grad_check(loss_fn: Callable[[Graph], Tensor], params: ParamStore, eps: float = 1e-3,
               n_samples: int = 200, seed: int = 0, names: Iterable[str] | None = None,
               order: int = 4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` builds a scalar loss on the graph it is given; it must be
    deterministic.  Coordinates are sampled uniformly over all parameters.
    ``order=2`` is the plain (f(x+h) - f(x-h)) / 2h estimate; the default
    fourth-order stencil tolerates a larger step, which keeps roundoff well
    below the 1e-8 floor for coordinates with near-zero gradient.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    stencil = {2: ((1, 0.5), (-1, -0.5)),
               4: ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12))}[order]
    names = list(names) if names is not None else list(params)
    params.zero_grad()
    graph = Graph(params, train=False)
    loss = loss_fn(graph)
    graph.backward(loss)
    analytic = {n: params.grads[n].copy() for n in names}

    rng = np.random.default_rng(seed)
    sizes = np.array([params[n].size for n in names])
    flat = rng.choice(sizes.sum(), size=min(n_samples, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for f in flat:
        k = int(np.searchsorted(offsets, f, side="right") - 1)
        name, pos = names[k], int(f - offsets[k])
        arr = params[name].reshape(-1)
        orig = arr[pos]
        numeric = 0.0
        for step, weight in stencil:
            arr[pos] = orig + step * eps
            numeric += weight * loss_fn(Graph(params, record=False)).item()
        arr[pos] = orig
        numeric /= eps
        a = analytic[name].reshape(-1)[pos]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    params.zero_grad()
    return worst


class Adam:
    def __init__(self, params: ParamStore, lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, clip_norm: float | None = 1.0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {n: np.zeros_like(v) for n, v in params.values.items()}
        self.v = {n: np.zeros_like(v) for n, v in params.values.items()}

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self.params.grads.values())))

    def step(self) -> float:
        """Clip, update, and return the pre-clip gradient norm."""
        norm = self.grad_norm()
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, value in self.params.values.items():
            g = self.params.grads[name] * scale
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            if self.lr:
                value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm
