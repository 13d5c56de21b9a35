"""Numerical machinery for schema induction.

- maximum-weight assignment (Hungarian) with a deterministic lexicographic
  tie-break, and the projection of continuous mapping matrices to binary
  permutation matrices;
- the relaxed graph-similarity loss and its reverse-mode gradients, with
  straight-through treatment of the projection: the forward pass uses the
  projected binary matrices, and gradients with respect to permutation
  entries flow unchanged to the corresponding continuous entries;
- a from-scratch AdamW update with bias correction and decoupled decay;
- central finite-difference verification of the analytic gradients at the
  frozen-projection relaxation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import autodiff as ad
from .relgraph import NUM_RELATIONS, Episode

# Above this size the lexicographic tie-break refinement is skipped and the
# core solver's (deterministic) optimal assignment is returned directly.
_LEX_TIEBREAK_MAX_SIZE = 8


def _optimal_total(score: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(score, maximize=True)
    return float(score[rows, cols].sum())


def hungarian_maximize(score: np.ndarray) -> np.ndarray:
    """Maximum-total assignment of min(R, C) pairs as a binary (R, C) matrix.

    Ties between equally scoring assignments are broken deterministically in
    favor of the assignment whose sorted (row, column) pair list is
    lexicographically smallest (exact for min(R, C) <= 8; larger matrices
    fall back to the solver's own deterministic choice).
    """
    score = np.asarray(score, dtype=float)
    if score.ndim != 2 or min(score.shape) < 1:
        raise ValueError("score must be a 2-d matrix with positive dimensions")
    if not np.all(np.isfinite(score)):
        raise ValueError("score matrix contains non-finite entries")
    rows_n, cols_n = score.shape
    k = min(rows_n, cols_n)
    perm = np.zeros((rows_n, cols_n))

    if rows_n == 1:
        perm[0, int(np.argmax(score[0]))] = 1.0
        return perm
    if cols_n == 1:
        perm[int(np.argmax(score[:, 0])), 0] = 1.0
        return perm
    if rows_n == 2 and cols_n == 2:
        if score[0, 0] + score[1, 1] >= score[0, 1] + score[1, 0]:
            perm[0, 0] = perm[1, 1] = 1.0
        else:
            perm[0, 1] = perm[1, 0] = 1.0
        return perm

    if k > _LEX_TIEBREAK_MAX_SIZE:
        r, c = linear_sum_assignment(score, maximize=True)
        perm[r, c] = 1.0
        return perm

    best = _optimal_total(score)
    tol = 1e-9 * max(1.0, float(np.abs(score).max()))
    used_cols: list[int] = []
    chosen = 0
    chosen_total = 0.0
    for i in range(rows_n):
        if chosen == k:
            break
        for j in range(cols_n):
            if j in used_cols:
                continue
            need = k - chosen - 1
            rest = 0.0
            if need > 0:
                rows_left = list(range(i + 1, rows_n))
                cols_left = [c for c in range(cols_n) if c not in used_cols and c != j]
                if min(len(rows_left), len(cols_left)) < need:
                    continue
                rest = _optimal_total(score[np.ix_(rows_left, cols_left)])
            if chosen_total + score[i, j] + rest >= best - tol:
                perm[i, j] = 1.0
                used_cols.append(j)
                chosen += 1
                chosen_total += score[i, j]
                break
    return perm


def project(m: np.ndarray) -> np.ndarray:
    """Project a continuous mapping matrix to a binary permutation matrix."""
    return hungarian_maximize(m)


def is_permutation_matrix(m: np.ndarray) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or not np.all((m == 0) | (m == 1)):
        return False
    return (
        np.all(m.sum(axis=0) <= 1)
        and np.all(m.sum(axis=1) <= 1)
        and int(m.sum()) == min(m.shape)
    )


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

MAPPING_INIT_HIGH = 0.01  # mapping entries start uniform in [0, 0.01)


@dataclass
class ParamSet:
    """All free parameters of one induction run."""

    maps_pos: list[np.ndarray]
    maps_neg: list[np.ndarray]
    schema_schema: np.ndarray
    alpha_logit: np.ndarray  # shape ()
    edge_logits: np.ndarray  # shape (NUM_RELATIONS,)

    @classmethod
    def initialize(
        cls, rng: np.random.Generator, node_count: int, n_pos: int, n_neg: int
    ) -> "ParamSet":
        def init_map() -> np.ndarray:
            return rng.uniform(0.0, MAPPING_INIT_HIGH, (node_count, node_count))

        return cls(
            maps_pos=[init_map() for _ in range(n_pos)],
            maps_neg=[init_map() for _ in range(n_neg)],
            schema_schema=init_map(),
            alpha_logit=np.zeros(()),
            edge_logits=np.zeros(NUM_RELATIONS),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        d = {f"map_pos_{i}": m for i, m in enumerate(self.maps_pos)}
        d.update({f"map_neg_{i}": m for i, m in enumerate(self.maps_neg)})
        d["schema_schema"] = self.schema_schema
        d["alpha_logit"] = self.alpha_logit
        d["edge_logits"] = self.edge_logits
        return d

    def copy(self) -> "ParamSet":
        return ParamSet(
            [m.copy() for m in self.maps_pos],
            [m.copy() for m in self.maps_neg],
            self.schema_schema.copy(),
            self.alpha_logit.copy(),
            self.edge_logits.copy(),
        )


@dataclass(frozen=True)
class LossConfig:
    """Flags of the loss itself (a slice of the full model config).

    fixed_alpha None means alpha is adaptive (sigmoid of its logit).
    Contrastive terms require edges; they are skipped for node-only graphs.
    """

    fixed_alpha: float | None = None
    contrastive: bool = True
    use_edges: bool = True

    def __post_init__(self) -> None:
        if self.fixed_alpha is not None and not 0.0 <= self.fixed_alpha <= 1.0:
            raise ValueError("fixed alpha must lie in [0, 1]")


@dataclass(frozen=True)
class EpisodeArrays:
    """Plain-array view of an episode's support graphs."""

    pos_nodes: tuple[np.ndarray, ...]
    neg_nodes: tuple[np.ndarray, ...]
    pos_edges: tuple[np.ndarray, ...] | None
    neg_edges: tuple[np.ndarray, ...] | None
    node_count: int

    @classmethod
    def from_episode(cls, episode: Episode) -> "EpisodeArrays":
        has_edges = episode.positives[0].has_edges
        return cls(
            pos_nodes=tuple(g.nodes for g in episode.positives),
            neg_nodes=tuple(g.nodes for g in episode.negatives),
            pos_edges=tuple(g.edges for g in episode.positives) if has_edges else None,
            neg_edges=tuple(g.edges for g in episode.negatives) if has_edges else None,
            node_count=episode.node_count,
        )


def _offdiag_mask(n: int) -> np.ndarray:
    """(n, n, n, n) mask selecting index tuples with k != l and j != m."""
    ne = ~np.eye(n, dtype=bool)
    return (ne[:, :, None, None] & ne[None, None, :, :]).astype(float)


def _class_terms(perms, nodes, edges, w, mask, n):
    """Schema (nodes, edges) and per-exemplar node/edge similarities."""
    schema_nodes = ad.mean_vars([ad.matmul(p, x) for p, x in zip(perms, nodes)])
    schema_edges = None
    weighted = None
    if edges is not None:
        weighted = [ad.weight_edges(w, e) for e in edges]
        schema_edges = ad.mean_vars([ad.align_edges(p, we) for p, we in zip(perms, weighted)])
    node_sims = []
    edge_sims = []
    for idx, p in enumerate(perms):
        cos_nodes = ad.cosine_rows(schema_nodes, nodes[idx])
        node_sims.append(ad.mul(ad.sum_all(ad.mul(p, cos_nodes)), 1.0 / n))
        if edges is not None:
            flat_schema = ad.reshape(schema_edges, (n * n, NUM_RELATIONS))
            flat_ex = ad.reshape(weighted[idx], (n * n, NUM_RELATIONS))
            cos_edges = ad.reshape(ad.cosine_rows(flat_schema, flat_ex), (n, n, n, n))
            coeff = ad.mul(ad.outer_pairs(p), mask)
            edge_sims.append(
                ad.mul(ad.sum_all(ad.mul(coeff, cos_edges)), 1.0 / (n * (n - 1)))
            )
    return schema_nodes, schema_edges, node_sims, edge_sims


def build_loss(
    arrays: EpisodeArrays,
    perms_pos: list[np.ndarray],
    perms_neg: list[np.ndarray],
    perm_cross: np.ndarray,
    alpha_logit: float,
    edge_logits: np.ndarray,
    cfg: LossConfig,
) -> tuple[ad.Var, dict[str, ad.Var], dict[str, float]]:
    """Relaxed loss tape at the given (binary or perturbed) permutations.

    With binary permutation matrices this evaluates exactly the hard loss
    -G_pos - G_neg - Gc_nodes + Gc_edges; as a function of the permutation
    entries it is the multilinear extension whose partial derivatives define
    the straight-through gradients.
    """
    n = arrays.node_count
    use_edges = cfg.use_edges and arrays.pos_edges is not None
    contrastive = cfg.contrastive and use_edges

    leaves: dict[str, ad.Var] = {}
    p_pos = [ad.Var(p) for p in perms_pos]
    p_neg = [ad.Var(p) for p in perms_neg]
    for i, v in enumerate(p_pos):
        leaves[f"map_pos_{i}"] = v
    for i, v in enumerate(p_neg):
        leaves[f"map_neg_{i}"] = v

    if cfg.fixed_alpha is not None:
        alpha = ad.Var(cfg.fixed_alpha)
    else:
        leaves["alpha_logit"] = ad.Var(np.asarray(alpha_logit, dtype=float))
        alpha = ad.sigmoid(leaves["alpha_logit"])
    w: ad.Var | None = None
    if use_edges:
        leaves["edge_logits"] = ad.Var(edge_logits)
        w = ad.softmax(leaves["edge_logits"])

    mask = _offdiag_mask(n) if use_edges else None
    sn_pos, se_pos, gn_pos, ge_pos = _class_terms(
        p_pos, arrays.pos_nodes, arrays.pos_edges if use_edges else None, w, mask, n
    )
    sn_neg, se_neg, gn_neg, ge_neg = _class_terms(
        p_neg, arrays.neg_nodes, arrays.neg_edges if use_edges else None, w, mask, n
    )

    def class_mean(node_sims, edge_sims):
        if not use_edges:
            return ad.mean_vars(node_sims)
        one_minus = ad.sub(1.0, alpha)
        return ad.mean_vars(
            [ad.add(ad.mul(alpha, gn), ad.mul(one_minus, ge))
             for gn, ge in zip(node_sims, edge_sims)]
        )

    g_pos = class_mean(gn_pos, ge_pos)
    g_neg = class_mean(gn_neg, ge_neg)
    loss = ad.add(ad.neg(g_pos), ad.neg(g_neg))

    gc_nodes_val = 0.0
    gc_edges_val = 0.0
    if contrastive:
        q = ad.Var(perm_cross)
        leaves["schema_schema"] = q
        cos_nodes = ad.cosine_rows(sn_pos, sn_neg)
        gc_nodes = ad.mul(ad.sum_all(ad.mul(q, cos_nodes)), 1.0 / n)
        flat_p = ad.reshape(se_pos, (n * n, NUM_RELATIONS))
        flat_n = ad.reshape(se_neg, (n * n, NUM_RELATIONS))
        cos_edges = ad.reshape(ad.cosine_rows(flat_p, flat_n), (n, n, n, n))
        coeff = ad.mul(ad.outer_pairs(q), mask)
        gc_edges = ad.mul(ad.sum_all(ad.mul(coeff, cos_edges)), 1.0 / (n * (n - 1)))
        loss = ad.add(loss, ad.add(ad.neg(gc_nodes), gc_edges))
        gc_nodes_val = float(gc_nodes.value)
        gc_edges_val = float(gc_edges.value)

    diag = {
        "g_pos": float(g_pos.value),
        "g_neg": float(g_neg.value),
        "gc_nodes": gc_nodes_val,
        "gc_edges": gc_edges_val,
        "alpha": float(alpha.value),
        "weights": np.asarray(w.value).copy() if w is not None else None,
    }
    return loss, leaves, diag


def loss_and_gradients(
    params: ParamSet, arrays: EpisodeArrays, cfg: LossConfig
) -> tuple[float, ParamSet, dict]:
    """Project, evaluate the loss, and backpropagate.

    Returns (loss, gradients shaped like the ParamSet, diagnostics). The
    diagnostics include the projected permutations actually used. Gradients
    for parameters the configuration freezes (fixed alpha; edge machinery on
    node-only graphs) are zero.
    """
    perms_pos = [project(m) for m in params.maps_pos]
    perms_neg = [project(m) for m in params.maps_neg]
    perm_cross = project(params.schema_schema)
    loss, leaves, diag = build_loss(
        arrays, perms_pos, perms_neg, perm_cross,
        float(params.alpha_logit), params.edge_logits, cfg,
    )
    loss.backward()

    def grad_of(name: str, like: np.ndarray) -> np.ndarray:
        leaf = leaves.get(name)
        if leaf is None or leaf.grad is None:
            return np.zeros_like(like)
        g = np.asarray(leaf.grad, dtype=float)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        return g

    grads = ParamSet(
        maps_pos=[grad_of(f"map_pos_{i}", m) for i, m in enumerate(params.maps_pos)],
        maps_neg=[grad_of(f"map_neg_{i}", m) for i, m in enumerate(params.maps_neg)],
        schema_schema=grad_of("schema_schema", params.schema_schema),
        alpha_logit=grad_of("alpha_logit", params.alpha_logit),
        edge_logits=grad_of("edge_logits", params.edge_logits),
    )
    diag["perms_pos"] = perms_pos
    diag["perms_neg"] = perms_neg
    diag["perm_cross"] = perm_cross
    return float(loss.value), grads, diag


def target_similarity_loss(
    schema_nodes: np.ndarray,
    schema_edges: np.ndarray | None,
    target_nodes: np.ndarray,
    weighted_target_edges: np.ndarray | None,
    perm: np.ndarray,
    alpha: float,
) -> tuple[float, np.ndarray, float, float]:
    """Negative schema-target similarity and its gradient w.r.t. the mapping.

    Schemas, alpha and edge weights are frozen here; only the mapping matrix
    is free. Returns (loss, grad, node_sim, edge_sim).
    """
    n = schema_nodes.shape[0]
    p = ad.Var(perm)
    cos_nodes = ad.cosine_rows(schema_nodes, target_nodes)
    gn = ad.mul(ad.sum_all(ad.mul(p, cos_nodes)), 1.0 / n)
    if schema_edges is None:
        loss = ad.neg(gn)
        ge_val = 0.0
    else:
        flat_s = schema_edges.reshape(n * n, NUM_RELATIONS)
        flat_t = weighted_target_edges.reshape(n * n, NUM_RELATIONS)
        cos_edges = ad.reshape(ad.cosine_rows(flat_s, flat_t), (n, n, n, n))
        coeff = ad.mul(ad.outer_pairs(p), _offdiag_mask(n))
        ge = ad.mul(ad.sum_all(ad.mul(coeff, cos_edges)), 1.0 / (n * (n - 1)))
        ge_val = float(ge.value)
        loss = ad.neg(ad.add(ad.mul(alpha, gn), ad.mul(1.0 - alpha, ge)))
    loss.backward()
    grad = p.grad if p.grad is not None else np.zeros_like(perm)
    return float(loss.value), np.asarray(grad, dtype=float), float(gn.value), ge_val


# ---------------------------------------------------------------------------
# AdamW
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamWHyper:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class AdamWState:
    exp_avg: dict[str, np.ndarray]
    exp_avg_sq: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamWState":
        return cls(
            exp_avg={k: np.zeros_like(v) for k, v in params.items()},
            exp_avg_sq={k: np.zeros_like(v) for k, v in params.items()},
        )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    hyper: AdamWHyper,
) -> tuple[dict[str, np.ndarray], AdamWState]:
    """One decoupled-weight-decay Adam update with bias correction.

    Parameter and state arrays are updated in place and returned.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    for key, p in params.items():
        g = grads[key]
        m = state.exp_avg[key]
        v = state.exp_avg_sq[key]
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
        if hyper.weight_decay != 0.0:
            update = update + hyper.weight_decay * p
        p -= hyper.lr * update
    return params, state


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    weight_decay: float = 0.0,
) -> dict[str, np.ndarray]:
    """Plain gradient-descent update (in place).

    Used for the mapping matrices: their entries act as accumulated mapping
    strengths whose relative ordering drives the assignment, so the update
    must stay proportional to the gradient. Adam-style normalization would
    erase the magnitude differences between candidate pairings and freeze
    the initial random assignment.
    """
    for key, p in params.items():
        g = grads[key]
        if weight_decay != 0.0:
            g = g + weight_decay * p
        p -= lr * g
    return params


def alignment_gradients(
    params: ParamSet,
    arrays: EpisodeArrays,
    schema_pos: tuple[np.ndarray, np.ndarray | None],
    schema_neg: tuple[np.ndarray, np.ndarray | None],
) -> dict[str, np.ndarray]:
    """Schema-exemplar mapping gradients of the within-class alignment
    similarity, with the current (hard) schemas held constant and the
    mapping entries continuous.

    Three deliberate properties. Alignment uses the equal combination of
    node and edge similarity regardless of alpha: with alpha saturated at 0
    or 1 the mapping search would otherwise lose one of its two alignment
    cues. The contrastive terms are excluded: correspondences are discovered
    from schema-exemplar similarity alone, and letting the cross-schema edge
    term reach the exemplar maps would reward misalignment (a diluted schema
    is trivially dissimilar from the other class). And the gradient is taken
    at the continuous entries, not the projection: at a binary point the
    multilinear edge terms are blind to pair swaps, which are the only
    alignment moves on small graphs.
    """
    out: dict[str, np.ndarray] = {}
    w = softmax_weights(params.edge_logits)
    for prefix, maps, nodes, edges, (sn, se) in (
        ("map_pos", params.maps_pos, arrays.pos_nodes, arrays.pos_edges, schema_pos),
        ("map_neg", params.maps_neg, arrays.neg_nodes, arrays.neg_edges, schema_neg),
    ):
        align_alpha = 0.5 if se is not None else 1.0
        for i, m in enumerate(maps):
            weighted = None
            if se is not None:
                # exemplar edges enter the similarity weighted, like targets
                weighted = edges[i] * w[None, None, :]
            _, grad, _, _ = target_similarity_loss(
                sn, se, nodes[i], weighted, m, align_alpha
            )
            if not np.all(np.isfinite(grad)):
                raise FloatingPointError(f"non-finite alignment gradient for {prefix}_{i}")
            out[f"{prefix}_{i}"] = grad
    return out


def softmax_weights(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def hard_schema_arrays(
    perms: list[np.ndarray],
    nodes: tuple[np.ndarray, ...],
    edges: tuple[np.ndarray, ...] | None,
    w: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Schema node and (weighted) edge arrays from hard permutations."""
    n = nodes[0].shape[0]
    cols = [np.argmax(p, axis=1) for p in perms]
    schema_nodes = np.mean([x[c] for x, c in zip(nodes, cols)], axis=0)
    schema_edges = None
    if edges is not None:
        stacked = []
        for e, c in zip(edges, cols):
            aligned = e[np.ix_(c, c)] * w[None, None, :]
            ii = np.arange(n)
            aligned[ii, ii] = 0.0
            stacked.append(aligned)
        schema_edges = np.mean(stacked, axis=0)
    return schema_nodes, schema_edges


def cross_alignment_gradient(
    schema_pos: tuple[np.ndarray, np.ndarray],
    schema_neg: tuple[np.ndarray, np.ndarray],
    q: np.ndarray,
) -> np.ndarray:
    """Gradient for the schema-schema mapping matrix, at its continuous
    entries: descend -(node similarity) + (edge similarity) between the two
    schemas, i.e. align roles across classes while the aligned edges stay
    maximally discriminative."""
    sn_p, se_p = schema_pos
    sn_n, se_n = schema_neg
    n = sn_p.shape[0]
    qv = ad.Var(q)
    cos_nodes = ad.cosine_rows(sn_p, sn_n)
    gc_nodes = ad.mul(ad.sum_all(ad.mul(qv, cos_nodes)), 1.0 / n)
    loss = ad.neg(gc_nodes)
    if se_p is not None:
        cos_edges = ad.reshape(
            ad.cosine_rows(se_p.reshape(n * n, NUM_RELATIONS), se_n.reshape(n * n, NUM_RELATIONS)),
            (n, n, n, n),
        )
        coeff = ad.mul(ad.outer_pairs(qv), _offdiag_mask(n))
        gc_edges = ad.mul(ad.sum_all(ad.mul(coeff, cos_edges)), 1.0 / (n * (n - 1)))
        loss = ad.add(loss, gc_edges)
    loss.backward()
    return np.asarray(qv.grad if qv.grad is not None else np.zeros_like(q), float)


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


def finite_diff_check(
    params: ParamSet,
    arrays: EpisodeArrays,
    cfg: LossConfig,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Projections are frozen to their current permutations and the loss is
    evaluated at perturbed permutation entries (the frozen-projection
    relaxation); alpha and edge-weight logits are perturbed directly. Entries
    with |analytic| + |numeric| <= 1e-8 are skipped.
    """
    _, grads, diag = loss_and_gradients(params, arrays, cfg)
    perms_pos = [p.copy() for p in diag["perms_pos"]]
    perms_neg = [p.copy() for p in diag["perms_neg"]]
    perm_cross = diag["perm_cross"].copy()
    alpha_box = np.array(float(params.alpha_logit))
    edge_logits = params.edge_logits.copy()

    def eval_loss() -> float:
        loss, _, _ = build_loss(
            arrays, perms_pos, perms_neg, perm_cross, float(alpha_box), edge_logits, cfg
        )
        return float(loss.value)

    worst = 0.0

    def compare(analytic: float, array: np.ndarray, idx) -> None:
        nonlocal worst
        orig = float(array[idx])
        array[idx] = orig + eps
        hi = eval_loss()
        array[idx] = orig - eps
        lo = eval_loss()
        array[idx] = orig
        numeric = (hi - lo) / (2.0 * eps)
        if abs(analytic) + abs(numeric) <= 1e-8:
            return
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric)))

    for target, grad in (
        *zip(perms_pos, grads.maps_pos),
        *zip(perms_neg, grads.maps_neg),
        (perm_cross, grads.schema_schema),
    ):
        for idx in np.ndindex(target.shape):
            compare(float(grad[idx]), target, idx)

    if cfg.fixed_alpha is None:
        compare(float(grads.alpha_logit), alpha_box, ())

    if cfg.use_edges and arrays.pos_edges is not None:
        for idx in np.ndindex(edge_logits.shape):
            compare(float(grads.edge_logits[idx]), edge_logits, idx)

    return worst
