"""Batch experiment runner: sweeps (problem x shots x seed x variant) cells,
writes per-target records and aggregate accuracy curves, and compares model
curves against an external human-accuracy file.

Determinism contract: every sweep cell derives its own seed from the master
seed and the cell coordinates, cells are independent, and records are written
in sorted order, so re-running a config reproduces the records file byte for
byte. Wall-clock timings are inherently non-reproducible and therefore live
in a separate sidecar file, not in the canonical records CSV.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features
from .model import (
    ModelConfig,
    baseline_prototype,
    classify,
    induce_schemas,
)
from .optim import AdamWHyper
from .relgraph import NUM_RELATIONS, Episode, ObjectGraph
from .scenegen import Catalog, Scene, default_catalog, generate_scene

WORKERS_ENV_VAR = "PSILEARN_WORKERS"


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 1)."""


@dataclass(frozen=True)
class VariantSpec:
    name: str
    config: ModelConfig


@dataclass(frozen=True)
class ExperimentConfig:
    problems: tuple[str, ...]
    shot_counts: tuple[int, ...]
    seeds: tuple[int, ...]
    variants: tuple[VariantSpec, ...]
    noise: bool = True
    targets_per_episode: int = 1
    output_dir: str = "results"
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.problems or not self.shot_counts or not self.seeds or not self.variants:
            raise ConfigError("problems, shot_counts, seeds and variants must be non-empty")
        for s in self.shot_counts:
            if s < 2 or s % 2 != 0:
                raise ConfigError(f"shot counts must be even and >= 2, got {s}")
        if self.targets_per_episode < 1:
            raise ConfigError("targets_per_episode must be >= 1")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ConfigError("variant names must be unique")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def parse_variant(d: dict) -> VariantSpec:
    try:
        name = d["name"]
        alpha_mode = d.get("alpha_mode", "adaptive")
        if isinstance(alpha_mode, str) and alpha_mode != "adaptive":
            raise ConfigError(f"bad alpha_mode {alpha_mode!r}")
        opt = AdamWHyper(
            lr=float(d.get("lr", 0.01)),
            beta1=float(d.get("beta1", 0.9)),
            beta2=float(d.get("beta2", 0.999)),
            eps=float(d.get("eps", 1e-8)),
            weight_decay=float(d.get("weight_decay", 0.0)),
        )
        config = ModelConfig(
            alpha_mode=alpha_mode if isinstance(alpha_mode, str) else float(alpha_mode),
            contrastive=bool(d.get("contrastive", True)),
            steps=int(d.get("steps", 300)),
            early_stop_window=int(d.get("early_stop_window", 20)),
            early_stop_tol=float(d.get("early_stop_tol", 1e-6)),
            optimizer=opt,
            variant=d.get("variant", "psi"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid variant entry {d!r}: {exc}") from exc
    return VariantSpec(name=str(name), config=config)


def parse_experiment_config(raw: dict) -> ExperimentConfig:
    try:
        cat = default_catalog()
        problems = tuple(raw["problems"])
        for p in problems:
            if p not in cat.problems:
                raise ConfigError(f"unknown problem {p!r}")
        return ExperimentConfig(
            problems=problems,
            shot_counts=tuple(int(s) for s in raw["shot_counts"]),
            seeds=tuple(int(s) for s in raw["seeds"]),
            variants=tuple(parse_variant(v) for v in raw["variants"]),
            noise=bool(raw.get("noise", True)),
            targets_per_episode=int(raw.get("targets_per_episode", 1)),
            output_dir=str(raw.get("output_dir", "results")),
            master_seed=int(raw.get("master_seed", 0)),
            workers=int(raw.get("workers", 1)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


@dataclass(frozen=True)
class EpisodeRecord:
    problem_id: str
    seed: int
    variant: str
    total_shots: int
    target_index: int
    true_label: str
    predicted_label: str
    correct: int
    sim_pos: float
    sim_neg: float
    final_alpha: float | None
    final_edge_weights: np.ndarray | None
    final_loss: float | None
    steps: int | None
    wall_time_ms: float


RECORD_COLUMNS = (
    "problem_id", "seed", "variant", "total_shots", "target_index",
    "true_label", "predicted_label", "correct", "sim_pos", "sim_neg",
    "final_alpha",
    *(f"final_w{i}" for i in range(NUM_RELATIONS)),
    "final_loss", "steps",
)


def derive_cell_seed(master_seed: int, problem: str, shots: int, seed_index: int, variant: str) -> int:
    """Stable per-cell seed: first 8 bytes of a SHA-256 over the coordinates."""
    key = f"psilearn|v1|{master_seed}|{problem}|{shots}|{seed_index}|{variant}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def build_episode_scenes(
    problem_id: str,
    shots: int,
    targets: int,
    seed_index: int,
    rng: np.random.Generator,
    catalog: Catalog | None = None,
) -> tuple[list[Scene], list[Scene], list[Scene]]:
    """Support and target scenes for one cell.

    Shots split evenly between classes. Target labels alternate, with the
    starting label flipping with seed parity so pooled sweeps stay balanced.
    """
    cat = catalog or default_catalog()
    spec = cat.spec(problem_id)
    per_class = shots // 2
    positives = [generate_scene(spec, "positive", rng, cat) for _ in range(per_class)]
    negatives = [generate_scene(spec, "negative", rng, cat) for _ in range(per_class)]
    first = "positive" if seed_index % 2 == 0 else "negative"
    other = "negative" if first == "positive" else "positive"
    target_scenes = [
        generate_scene(spec, first if t % 2 == 0 else other, rng, cat)
        for t in range(targets)
    ]
    return positives, negatives, target_scenes


def _scene_graphs(scenes, rng, noise, catalog):
    return [features.scene_to_graph(s, rng if noise else None, catalog) for s in scenes]


def run_cell(
    problem_id: str,
    shots: int,
    seed_index: int,
    variant: VariantSpec,
    noise: bool,
    targets_per_episode: int,
    master_seed: int,
    catalog: Catalog | None = None,
) -> list[EpisodeRecord]:
    """One sweep cell: generate, induce, classify every target."""
    cat = catalog or default_catalog()
    cell_seed = derive_cell_seed(master_seed, problem_id, shots, seed_index, variant.name)
    rng = np.random.default_rng(cell_seed)
    start = time.perf_counter()

    pos_scenes, neg_scenes, target_scenes = build_episode_scenes(
        problem_id, shots, targets_per_episode, seed_index, rng, cat
    )
    spec = cat.spec(problem_id)
    records: list[EpisodeRecord] = []

    if variant.config.variant == "prototype-global":
        results = [
            baseline_prototype(pos_scenes, neg_scenes, t) for t in target_scenes
        ]
        alpha = weights = loss = steps = None
    else:
        if variant.config.variant == "psi-patches":
            pos_graphs = [features.patch_graph(s, cat) for s in pos_scenes]
            neg_graphs = [features.patch_graph(s, cat) for s in neg_scenes]
            target_graphs = [features.patch_graph(s, cat) for s in target_scenes]
        else:
            pos_graphs = _scene_graphs(pos_scenes, rng, noise, cat)
            neg_graphs = _scene_graphs(neg_scenes, rng, noise, cat)
            target_graphs = _scene_graphs(target_scenes, rng, noise, cat)
        episode = Episode(
            positives=tuple(pos_graphs),
            negatives=tuple(neg_graphs),
            target=target_graphs[0],
            true_label=target_scenes[0].label,
            metadata={
                "problem_id": problem_id,
                "seed": seed_index,
                "distinguishing_relation": spec.distinguishing_relation,
            },
        )
        model = induce_schemas(episode, variant.config, rng)
        results = [
            classify(model, tg, variant.config, rng) for tg in target_graphs
        ]
        alpha = model.alpha
        weights = model.edge_weights.values if model.edge_weights is not None else None
        loss = model.loss_trace[-1]
        steps = model.steps_run

    elapsed_ms = (time.perf_counter() - start) * 1000.0
    per_record_ms = elapsed_ms / max(len(target_scenes), 1)
    for idx, (scene, (label, sim_pos, sim_neg)) in enumerate(zip(target_scenes, results)):
        records.append(
            EpisodeRecord(
                problem_id=problem_id,
                seed=seed_index,
                variant=variant.name,
                total_shots=shots,
                target_index=idx,
                true_label=scene.label,
                predicted_label=label,
                correct=int(label == scene.label),
                sim_pos=sim_pos,
                sim_neg=sim_neg,
                final_alpha=alpha,
                final_edge_weights=weights,
                final_loss=loss,
                steps=steps,
                wall_time_ms=per_record_ms,
            )
        )
    return records


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _record_row(r: EpisodeRecord) -> list[str]:
    weights = (
        [_fmt(w) for w in r.final_edge_weights]
        if r.final_edge_weights is not None
        else [""] * NUM_RELATIONS
    )
    return [
        r.problem_id, _fmt(r.seed), r.variant, _fmt(r.total_shots), _fmt(r.target_index),
        r.true_label, r.predicted_label, _fmt(r.correct), _fmt(r.sim_pos), _fmt(r.sim_neg),
        _fmt(r.final_alpha), *weights, _fmt(r.final_loss), _fmt(r.steps),
    ]


def _cell_task(args):
    return args[:4], run_cell(
        args[0], args[1], args[2], args[3], args[4], args[5], args[6]
    )


def run_experiment(config: ExperimentConfig, catalog: Catalog | None = None) -> Path:
    """Execute the sweep; returns the path of the canonical records CSV.

    Failed cells are logged to failures.csv and skipped, never aborting the
    sweep. Worker count can be overridden by the PSILEARN_WORKERS env var.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = config.workers
    env_workers = os.environ.get(WORKERS_ENV_VAR)
    if env_workers:
        workers = max(1, int(env_workers))

    cells = [
        (problem, shots, seed, variant, config.noise,
         config.targets_per_episode, config.master_seed)
        for problem in config.problems
        for shots in config.shot_counts
        for seed in config.seeds
        for variant in config.variants
    ]

    all_records: list[EpisodeRecord] = []
    failures: list[tuple[str, int, int, str, str]] = []

    def on_result(cell, records):
        all_records.extend(records)

    if workers == 1:
        for cell in cells:
            try:
                on_result(cell, run_cell(*cell, catalog=catalog))
            except Exception as exc:  # logged, sweep continues
                failures.append((cell[0], cell[1], cell[2], cell[3].name, str(exc)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_cell_task, cell): cell for cell in cells}
            for future, cell in futures.items():
                try:
                    _, records = future.result()
                    on_result(cell, records)
                except Exception as exc:
                    failures.append((cell[0], cell[1], cell[2], cell[3].name, str(exc)))

    variant_order = {v.name: i for i, v in enumerate(config.variants)}
    all_records.sort(
        key=lambda r: (r.problem_id, r.total_shots, r.seed, variant_order[r.variant], r.target_index)
    )

    records_path = out_dir / "records.csv"
    with open(records_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for r in all_records:
            writer.writerow(_record_row(r))

    with open(out_dir / "timings.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["problem_id", "total_shots", "seed", "variant", "target_index", "wall_time_ms"])
        for r in all_records:
            writer.writerow([r.problem_id, r.total_shots, r.seed, r.variant, r.target_index,
                             f"{r.wall_time_ms:.3f}"])

    failures.sort()
    with open(out_dir / "failures.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["problem_id", "total_shots", "seed", "variant", "error"])
        for row in failures:
            writer.writerow(row)

    return records_path


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def read_records(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


AGGREGATE_COLUMNS = (
    "variant", "problem_id", "total_shots", "n", "correct", "accuracy",
    "wilson_low", "wilson_high", "mean_alpha",
    *(f"mean_w{i}" for i in range(NUM_RELATIONS)),
)


def aggregate_curves(records: list[dict]) -> list[dict]:
    """Per-(variant, problem, shots) accuracy with Wilson 95% bounds, plus
    pooled rows with problem_id "ALL". Also mean final alpha and mean edge
    weights over the records that carry them."""
    groups: dict[tuple[str, str, int], list[dict]] = {}
    for r in records:
        shots = int(r["total_shots"])
        for problem in (r["problem_id"], "ALL"):
            groups.setdefault((r["variant"], problem, shots), []).append(r)

    rows = []
    for (variant, problem, shots) in sorted(groups):
        rs = groups[(variant, problem, shots)]
        n = len(rs)
        correct = sum(int(r["correct"]) for r in rs)
        lo, hi = wilson_interval(correct, n)
        alphas = [float(r["final_alpha"]) for r in rs if r["final_alpha"] != ""]
        row = {
            "variant": variant,
            "problem_id": problem,
            "total_shots": shots,
            "n": n,
            "correct": correct,
            "accuracy": correct / n,
            "wilson_low": lo,
            "wilson_high": hi,
            "mean_alpha": sum(alphas) / len(alphas) if alphas else None,
        }
        for i in range(NUM_RELATIONS):
            ws = [float(r[f"final_w{i}"]) for r in rs if r[f"final_w{i}"] != ""]
            row[f"mean_w{i}"] = sum(ws) / len(ws) if ws else None
        rows.append(row)
    return rows


def write_aggregates(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            writer.writerow([
                row["variant"], row["problem_id"], _fmt(row["total_shots"]),
                _fmt(row["n"]), _fmt(row["correct"]), _fmt(row["accuracy"]),
                _fmt(row["wilson_low"]), _fmt(row["wilson_high"]), _fmt(row["mean_alpha"]),
                *[_fmt(row[f"mean_w{i}"]) for i in range(NUM_RELATIONS)],
            ])


def read_aggregates(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# Human-curve comparison
# ---------------------------------------------------------------------------


def load_human_curve(path, problem_class: str = "first-order") -> dict[int, float]:
    """Rows of (problem_class, total_shots, accuracy) filtered to one class."""
    out: dict[int, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["problem_class"] != problem_class:
                continue
            acc = float(row["accuracy"])
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"human accuracy out of range: {acc}")
            out[int(row["total_shots"])] = acc
    return out


def compare_to_human(
    model_curve: dict[int, float], human_curve: dict[int, float]
) -> tuple[float, float]:
    """(RMSE, MAE) between accuracy curves, in percentage points, over the
    shot counts present in both curves."""
    shots = sorted(set(model_curve) & set(human_curve))
    if not shots:
        raise ValueError("model and human curves share no shot counts")
    gaps = [100.0 * (model_curve[s] - human_curve[s]) for s in shots]
    rmse = math.sqrt(sum(g * g for g in gaps) / len(gaps))
    mae = sum(abs(g) for g in gaps) / len(gaps)
    return rmse, mae


def model_curve_from_aggregates(
    rows: list[dict], variant: str, problem_id: str = "ALL"
) -> dict[int, float]:
    return {
        int(r["total_shots"]): float(r["accuracy"])
        for r in rows
        if r["variant"] == variant and r["problem_id"] == problem_id
    }
