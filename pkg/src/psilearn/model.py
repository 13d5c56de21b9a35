"""Schema induction and few-shot classification.

A schema is a class prototype graph: nodes and edges averaged over
permutation-aligned, edge-weighted exemplars. Induction optimizes the
continuous mapping matrices, the node/edge mixing weight alpha and the
relation weights by gradient descent on the graph-similarity loss, projecting
mappings to permutations at every step. Classification freezes the schemas
and the learned alpha and weights, optimizes a fresh mapping between each
schema and the target, and predicts the class with the higher similarity.

Two control models are included: a single-vector prototype over whole-scene
occupancy descriptors, and an edgeless variant over grid-patch node graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import features
from .optim import (
    AdamWHyper,
    AdamWState,
    EpisodeArrays,
    LossConfig,
    ParamSet,
    adamw_step,
    alignment_gradients,
    cross_alignment_gradient,
    hard_schema_arrays,
    is_permutation_matrix,
    loss_and_gradients,
    project,
    sgd_step,
    target_similarity_loss,
)
from .relgraph import (
    EdgeWeights,
    Episode,
    ObjectGraph,
    cosine_similarity,
    edge_similarity,
    graph_similarity,
    node_similarity,
)
from .scenegen import Scene

VARIANTS = ("psi", "psi-patches", "prototype-global")


@dataclass(frozen=True)
class ModelConfig:
    """Knobs of one model variant.

    alpha_mode is "adaptive" or a fixed float in [0, 1]. Contrastive terms
    push the relation weights toward class-discriminative relations; they can
    be switched off, e.g. to study the within-class objective alone.
    """

    alpha_mode: str | float = "adaptive"
    contrastive: bool = True
    steps: int = 300
    early_stop_window: int = 20
    early_stop_tol: float = 1e-6
    optimizer: AdamWHyper = field(default_factory=AdamWHyper)
    # Leak rate of the mapping-strength accumulators: entries are an
    # exponential moving average of pairing quality, so the projection
    # tracks the current alignment landscape instead of stale integrals.
    map_decay: float = 5.0
    variant: str = "psi"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if isinstance(self.alpha_mode, str):
            if self.alpha_mode != "adaptive":
                raise ValueError("alpha_mode must be 'adaptive' or a float in [0, 1]")
        elif not 0.0 <= float(self.alpha_mode) <= 1.0:
            raise ValueError("fixed alpha must lie in [0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def fixed_alpha(self) -> float | None:
        return None if self.alpha_mode == "adaptive" else float(self.alpha_mode)

    def loss_config(self, use_edges: bool) -> LossConfig:
        return LossConfig(
            fixed_alpha=self.fixed_alpha,
            contrastive=self.contrastive and use_edges,
            use_edges=use_edges,
        )


@dataclass(frozen=True)
class Schema:
    prototype: ObjectGraph
    class_label: str


@dataclass(frozen=True)
class TrainedModel:
    schema_pos: Schema
    schema_neg: Schema
    alpha: float
    edge_weights: EdgeWeights | None
    final_params: ParamSet
    loss_trace: tuple[float, ...]

    @property
    def steps_run(self) -> int:
        return len(self.loss_trace)


def compute_schema(
    exemplars: Sequence[ObjectGraph],
    maps: Sequence[np.ndarray],
    w: EdgeWeights | None,
    class_label: str = "positive",
) -> Schema:
    """Prototype graph from permutation-aligned, edge-weighted exemplars.

    Schema node k averages, over exemplars, the exemplar node each map
    assigns to row k; schema edge (k, l) averages the weighted exemplar edges
    between the nodes mapped from k and l.
    """
    if not exemplars:
        raise ValueError("schema needs at least one exemplar")
    if len(maps) != len(exemplars):
        raise ValueError("one mapping per exemplar required")
    n = exemplars[0].node_count
    has_edges = exemplars[0].has_edges
    if has_edges and w is None:
        raise ValueError("edge weights required for edged exemplars")
    assignments = []
    for g, m in zip(exemplars, maps):
        m = np.asarray(m)
        if g.node_count != n:
            raise ValueError("exemplars must share one node count")
        if m.shape != (n, g.node_count) or not is_permutation_matrix(m):
            raise ValueError("maps must be one-to-one permutation matrices")
        cols = np.argmax(m, axis=1)
        if np.any(m.sum(axis=1) < 1):
            raise ValueError("every schema row must be mapped in every exemplar")
        assignments.append(cols)

    nodes = np.mean(
        [g.nodes[cols] for g, cols in zip(exemplars, assignments)], axis=0
    )
    edges = None
    if has_edges:
        stacked = []
        for g, cols in zip(exemplars, assignments):
            aligned = g.edges[np.ix_(cols, cols)] * w.values[None, None, :]
            ii = np.arange(n)
            aligned[ii, ii] = 0.0  # diagonal stays empty
            stacked.append(aligned)
        edges = np.mean(stacked, axis=0)
    return Schema(ObjectGraph(nodes, edges), class_label)


def _optimize(
    params: ParamSet,
    arrays: EpisodeArrays,
    loss_cfg: LossConfig,
    config: ModelConfig,
    scalar_trainable: dict[str, np.ndarray],
    map_trainable: dict[str, np.ndarray],
    step_hook: Callable[[int, dict], None] | None = None,
) -> list[float]:
    """Project / evaluate / update loop with plateau early stopping.

    Alpha and the edge-weight logits descend the configured loss with AdamW.
    Mapping matrices descend their alignment objectives with plain gradient
    steps, so that accumulated entries order candidate pairings by alignment
    quality for the projection (see optim.alignment_gradients and
    optim.cross_alignment_gradient).
    """
    state = AdamWState.for_params(scalar_trainable)
    trace: list[float] = []
    prev_progress: tuple[float, float] | None = None
    flat_steps = 0
    train_cross = "schema_schema" in map_trainable
    exemplar_maps = {k: v for k, v in map_trainable.items() if k != "schema_schema"}
    use_edges = arrays.pos_edges is not None
    for step in range(config.steps):
        loss, grads, diag = loss_and_gradients(params, arrays, loss_cfg)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at step {step}: {loss}")
        trace.append(loss)
        if step_hook is not None:
            step_hook(step, diag)
        grad_dict = grads.as_dict()
        if scalar_trainable:
            adamw_step(
                scalar_trainable,
                {k: grad_dict[k] for k in scalar_trainable},
                state,
                config.optimizer,
            )
        align_norm = 0.0
        if exemplar_maps or train_cross:
            w = diag["weights"] if use_edges else None
            schema_pos = hard_schema_arrays(
                diag["perms_pos"], arrays.pos_nodes, arrays.pos_edges, w
            )
            schema_neg = hard_schema_arrays(
                diag["perms_neg"], arrays.neg_nodes, arrays.neg_edges, w
            )
        if exemplar_maps:
            align_grads = alignment_gradients(params, arrays, schema_pos, schema_neg)
            sgd_step(
                exemplar_maps,
                {k: align_grads[k] for k in exemplar_maps},
                config.optimizer.lr,
                config.map_decay,
            )
            align_norm = max(float(np.abs(g).max()) for g in align_grads.values())
        if train_cross:
            q_grad = cross_alignment_gradient(schema_pos, schema_neg, params.schema_schema)
            sgd_step(
                {"schema_schema": params.schema_schema},
                {"schema_schema": q_grad},
                config.optimizer.lr,
                config.map_decay,
            )
            align_norm = max(align_norm, float(np.abs(q_grad).max()))
        # Plateau: projected loss flat and the alignment forces no longer
        # changing (mapping strengths settled at their moving average).
        progress = (loss, align_norm)
        if prev_progress is not None \
                and abs(progress[0] - prev_progress[0]) < config.early_stop_tol \
                and abs(progress[1] - prev_progress[1]) < config.early_stop_tol:
            flat_steps += 1
            if flat_steps >= config.early_stop_window:
                break
        else:
            flat_steps = 0
        prev_progress = progress
    return trace


def induce_schemas(
    episode: Episode,
    config: ModelConfig,
    rng: np.random.Generator,
    step_hook: Callable[[int, dict], None] | None = None,
) -> TrainedModel:
    """Fit schemas to an episode's support set.

    Mapping matrices start uniform in [0, 0.01); the alpha logit and the
    relation-weight logits start at zero (alpha 0.5, uniform weights). The
    optional step_hook receives (step, diagnostics) before each update.
    """
    arrays = EpisodeArrays.from_episode(episode)
    use_edges = arrays.pos_edges is not None
    loss_cfg = config.loss_config(use_edges)
    params = ParamSet.initialize(
        rng, arrays.node_count, len(episode.positives), len(episode.negatives)
    )

    scalar_trainable: dict[str, np.ndarray] = {}
    map_trainable: dict[str, np.ndarray] = {}
    for name, value in params.as_dict().items():
        if name == "alpha_logit":
            if loss_cfg.fixed_alpha is None:
                scalar_trainable[name] = value
        elif name == "edge_logits":
            if use_edges:
                scalar_trainable[name] = value
        elif name == "schema_schema":
            if loss_cfg.contrastive:
                map_trainable[name] = value
        else:
            map_trainable[name] = value
    trace = _optimize(params, arrays, loss_cfg, config, scalar_trainable, map_trainable, step_hook)

    alpha = (
        loss_cfg.fixed_alpha
        if loss_cfg.fixed_alpha is not None
        else float(1.0 / (1.0 + math.exp(-float(params.alpha_logit))))
    )
    weights = EdgeWeights.from_logits(params.edge_logits) if use_edges else None
    maps_pos = [project(m) for m in params.maps_pos]
    maps_neg = [project(m) for m in params.maps_neg]
    return TrainedModel(
        schema_pos=compute_schema(episode.positives, maps_pos, weights, "positive"),
        schema_neg=compute_schema(episode.negatives, maps_neg, weights, "negative"),
        alpha=alpha,
        edge_weights=weights,
        final_params=params,
        loss_trace=tuple(trace),
    )


def _optimize_target_mapping(
    schema: Schema,
    target: ObjectGraph,
    alpha: float,
    weights: EdgeWeights | None,
    config: ModelConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Fresh mapping matrix between a frozen schema and the target.

    The mapping search maximizes the node+edge alignment combination; the
    returned similarity is then evaluated at the learned alpha.
    """
    n = schema.prototype.node_count
    m = rng.uniform(0.0, 0.01, (n, n))
    weighted_edges = None
    align_alpha = 1.0
    if schema.prototype.has_edges:
        weighted_edges = target.edges * weights.values[None, None, :]
        align_alpha = 0.5
    prev = None
    flat_steps = 0
    for _ in range(config.steps):
        # Alignment gradients at the continuous entries (graduated
        # assignment); see optim.alignment_gradients for the rationale.
        loss, grad, _, _ = target_similarity_loss(
            schema.prototype.nodes,
            schema.prototype.edges,
            target.nodes,
            weighted_edges,
            m,
            align_alpha,
        )
        sgd_step({"m": m}, {"m": grad}, config.optimizer.lr, config.map_decay)
        if prev is not None and abs(loss - prev) < config.early_stop_tol:
            flat_steps += 1
            if flat_steps >= config.early_stop_window:
                break
        else:
            flat_steps = 0
        prev = loss
    perm = project(m)
    if schema.prototype.has_edges:
        sim = graph_similarity(
            alpha,
            node_similarity(schema.prototype, target, perm),
            edge_similarity(schema.prototype, target, perm, weights),
        )
    else:
        sim = node_similarity(schema.prototype, target, perm)
    return perm, sim


def classify(
    model: TrainedModel,
    target: ObjectGraph,
    config: ModelConfig,
    rng: np.random.Generator,
) -> tuple[str, float, float]:
    """Predict the target's class from frozen schemas.

    A fresh mapping matrix is optimized per schema (same initialization and
    budget as induction); the target's edges are weighted by the learned
    relation weights and similarity uses the learned alpha. Ties resolve to
    positive.
    """
    if target.node_count != model.schema_pos.prototype.node_count:
        raise ValueError(
            f"target node count {target.node_count} does not match schema "
            f"node count {model.schema_pos.prototype.node_count}"
        )
    _, sim_pos = _optimize_target_mapping(
        model.schema_pos, target, model.alpha, model.edge_weights, config, rng
    )
    _, sim_neg = _optimize_target_mapping(
        model.schema_neg, target, model.alpha, model.edge_weights, config, rng
    )
    label = "positive" if sim_pos >= sim_neg else "negative"
    return label, sim_pos, sim_neg


def baseline_prototype(
    positive_scenes: Sequence[Scene],
    negative_scenes: Sequence[Scene],
    target_scene: Scene,
) -> tuple[str, float, float]:
    """Single-vector prototype control: cosine to mean occupancy descriptors."""
    proto_pos = np.mean([features.global_descriptor(s) for s in positive_scenes], axis=0)
    proto_neg = np.mean([features.global_descriptor(s) for s in negative_scenes], axis=0)
    desc = features.global_descriptor(target_scene)
    sim_pos = cosine_similarity(desc, proto_pos)
    sim_neg = cosine_similarity(desc, proto_neg)
    label = "positive" if sim_pos >= sim_neg else "negative"
    return label, sim_pos, sim_neg


def baseline_patches(
    episode: Episode,
    target: ObjectGraph,
    config: ModelConfig,
    rng: np.random.Generator,
) -> tuple[str, float, float]:
    """Edgeless patch-node control: induction and classification over node
    similarity alone (no edges, alpha, or contrastive terms)."""
    patch_config = replace(config, variant="psi-patches", contrastive=False)
    model = induce_schemas(episode, patch_config, rng)
    return classify(model, target, patch_config, rng)
