"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Var records its value and, for each Var input, a vector-Jacobian closure.
Calling backward() on a scalar Var accumulates gradients into every leaf by
walking the tape in reverse topological order. Plain ndarrays and floats are
accepted wherever a Var is, and are treated as constants.

The op set is deliberately small: exactly what the graph-similarity loss
needs, including a batched row-wise cosine op and two bilinear alignment ops
whose backward rules are written out with einsum.
"""

from __future__ import annotations

import numpy as np

_NORM_EPS = 1e-12


class Var:
    __slots__ = ("value", "_parents", "grad")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        self._parents = parents  # tuple of (Var, vjp_fn)
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def backward(self) -> None:
        """Accumulate gradients of this (scalar) Var into every ancestor."""
        if self.value.shape != ():
            raise ValueError("backward() requires a scalar Var")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones(())
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, vjp in node._parents:
                g = vjp(node.grad)
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.value)
                parent.grad = parent.grad + g


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, value, vjp_a, vjp_b) -> Var:
    parents = []
    if isinstance(a, Var):
        parents.append((a, vjp_a))
    if isinstance(b, Var):
        parents.append((b, vjp_b))
    return Var(value, tuple(parents))


def add(a, b) -> Var:
    av, bv = value_of(a), value_of(b)
    return _binary(
        a, b, av + bv,
        lambda g: _unbroadcast(g, av.shape),
        lambda g: _unbroadcast(g, bv.shape),
    )


def sub(a, b) -> Var:
    av, bv = value_of(a), value_of(b)
    return _binary(
        a, b, av - bv,
        lambda g: _unbroadcast(g, av.shape),
        lambda g: _unbroadcast(-g, bv.shape),
    )


def mul(a, b) -> Var:
    av, bv = value_of(a), value_of(b)
    return _binary(
        a, b, av * bv,
        lambda g: _unbroadcast(g * bv, av.shape),
        lambda g: _unbroadcast(g * av, bv.shape),
    )


def neg(a) -> Var:
    av = value_of(a)
    if isinstance(a, Var):
        return Var(-av, ((a, lambda g: -g),))
    return Var(-av)


def sum_all(a) -> Var:
    av = value_of(a)
    if isinstance(a, Var):
        return Var(av.sum(), ((a, lambda g: g * np.ones_like(av)),))
    return Var(av.sum())


def matmul(a, b) -> Var:
    av, bv = value_of(a), value_of(b)
    return _binary(
        a, b, av @ bv,
        lambda g: g @ bv.T,
        lambda g: av.T @ g,
    )


def reshape(a, shape) -> Var:
    av = value_of(a)
    if isinstance(a, Var):
        return Var(av.reshape(shape), ((a, lambda g: g.reshape(av.shape)),))
    return Var(av.reshape(shape))


def mean_vars(items: list) -> Var:
    """Elementwise mean of same-shape Vars/arrays."""
    if not items:
        raise ValueError("mean of nothing")
    values = [value_of(x) for x in items]
    inv = 1.0 / len(items)
    parents = tuple(
        (x, (lambda g, _inv=inv: g * _inv)) for x in items if isinstance(x, Var)
    )
    return Var(sum(values) * inv, parents)


def sigmoid(a) -> Var:
    av = value_of(a)
    s = 1.0 / (1.0 + np.exp(-av))
    if isinstance(a, Var):
        return Var(s, ((a, lambda g: g * s * (1.0 - s)),))
    return Var(s)


def softmax(a) -> Var:
    av = value_of(a)
    z = av - av.max()
    e = np.exp(z)
    s = e / e.sum()
    if isinstance(a, Var):
        return Var(s, ((a, lambda g: s * (g - float(g @ s))),))
    return Var(s)


def cosine_rows(u, v) -> Var:
    """Pairwise cosine similarity between rows: (p, d) x (q, d) -> (p, q).

    Rows with norm below 1e-12 produce zero similarities and receive zero
    gradient, matching the zero-vector convention of the scalar cosine.
    """
    uv, vv = value_of(u), value_of(v)
    nu = np.linalg.norm(uv, axis=1)
    nv = np.linalg.norm(vv, axis=1)
    su = nu >= _NORM_EPS
    sv = nv >= _NORM_EPS
    un = np.where(su[:, None], uv / np.where(su, nu, 1.0)[:, None], 0.0)
    vn = np.where(sv[:, None], vv / np.where(sv, nv, 1.0)[:, None], 0.0)
    c = un @ vn.T

    def vjp_u(g):
        gu = (g @ vn - (g * c).sum(axis=1, keepdims=True) * un)
        gu = gu / np.where(su, nu, 1.0)[:, None]
        return np.where(su[:, None], gu, 0.0)

    def vjp_v(g):
        gv = (g.T @ un - (g.T * c.T).sum(axis=1, keepdims=True) * vn)
        gv = gv / np.where(sv, nv, 1.0)[:, None]
        return np.where(sv[:, None], gv, 0.0)

    return _binary(u, v, c, vjp_u, vjp_v)


def outer_pairs(p) -> Var:
    """O[a, b, c, d] = P[a, c] * P[b, d] for a square matrix P."""
    pv = value_of(p)
    o = np.einsum("ac,bd->abcd", pv, pv)
    if isinstance(p, Var):
        def vjp(g):
            return np.einsum("abcd,bd->ac", g, pv) + np.einsum("abcd,ac->bd", g, pv)
        return Var(o, ((p, vjp),))
    return Var(o)


def align_edges(p, we) -> Var:
    """Bilinear edge alignment: O[k, l, :] = sum_{j, m} P[k,j] P[l,m] WE[j,m,:].

    With a binary permutation P this picks out the exemplar edge whose sender
    and receiver map to schema slots k and l.
    """
    pv, wev = value_of(p), value_of(we)
    o = np.einsum("kj,lm,jmr->klr", pv, pv, wev)

    def vjp_p(g):
        return (np.einsum("klr,lm,jmr->kj", g, pv, wev)
                + np.einsum("klr,kj,jmr->lm", g, pv, wev))

    def vjp_we(g):
        return np.einsum("kj,lm,klr->jmr", pv, pv, g)

    return _binary(p, we, o, vjp_p, vjp_we)


def weight_edges(w, e) -> Var:
    """Scale each edge vector elementwise: (n, n, r) edges by a (r,) weight."""
    wv, ev = value_of(w), value_of(e)
    return _binary(
        w, e, ev * wv[None, None, :],
        lambda g: (g * ev).sum(axis=(0, 1)),
        lambda g: g * wv[None, None, :],
    )
