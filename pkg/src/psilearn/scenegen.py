"""Synthetic scene generator for first-order relational classification problems.

Each built-in problem produces labeled two-object scenes on a square canvas
where the positive and negative classes differ in exactly one pairwise
relation (the problem's distinguishing relation). Negatives are "hard": both
classes draw object shapes, sizes and vertex counts from the same samplers,
so only the relational structure separates them.

Ground-truth relations are computed from polygon geometry. The seven relation
values per ordered object pair are binary except normalized distance, which
is continuous in [0, 1]. Gaussian noise can be injected afterwards to mimic
imperfect relation detection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from . import geometry as geo
from .relgraph import (
    NUM_RELATIONS,
    REL_DISTANCE,
    REL_INSIDE,
    REL_MIRRORED,
    REL_REFLECTION,
    REL_SAME_SHAPE,
    REL_SAME_SIZE,
    REL_TOUCHING,
    RelationVector,
)


class GenerationError(RuntimeError):
    """Raised when rejection sampling exhausts its attempt budget."""


@dataclass(frozen=True)
class Shape:
    """Closed simple polygon, vertices in CCW order, absolute canvas units."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 8:
            raise ValueError("shape needs at least 8 vertices of dimension 2")
        if geo.polygon_area(v) <= 0:
            raise ValueError("shape must have positive signed area (CCW order)")
        object.__setattr__(self, "vertices", v)


@dataclass(frozen=True)
class SceneObject:
    shape: Shape
    centroid: np.ndarray
    scale: float

    @property
    def vertices(self) -> np.ndarray:
        return self.shape.vertices

    @property
    def area(self) -> float:
        return geo.polygon_area(self.shape.vertices)


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    label: str
    problem_id: str
    distinguishing_relation: int

    def __post_init__(self) -> None:
        if self.label not in ("positive", "negative"):
            raise ValueError(f"invalid label {self.label!r}")


@dataclass(frozen=True)
class ProblemSpec:
    problem_id: str
    object_count: int
    distinguishing_relation: int
    params: dict = field(default_factory=dict)
    randomize_position: bool = True

    def __post_init__(self) -> None:
        if self.object_count < 2:
            raise ValueError("problems need at least 2 objects")
        if not 0 <= self.distinguishing_relation < NUM_RELATIONS:
            raise ValueError("distinguishing relation index out of range")


@dataclass(frozen=True)
class Catalog:
    """Problem catalog and geometric tolerances, loaded from a config file."""

    canvas_size: float
    touch_epsilon: float
    shape_moment_tolerance: float
    same_size_tolerance: float
    reflection_tolerance: float
    binary_noise_sd: float
    distance_noise_fraction: float
    vertex_count_min: int
    vertex_count_max: int
    radius_min_fraction: float
    min_angle_gap: float
    max_placement_attempts: int
    problems: dict[str, ProblemSpec]
    catalog_version: int

    def spec(self, problem_id: str, randomize_position: bool = True) -> ProblemSpec:
        if problem_id not in self.problems:
            raise KeyError(f"unknown problem {problem_id!r}; known: {sorted(self.problems)}")
        base = self.problems[problem_id]
        if randomize_position == base.randomize_position:
            return base
        return ProblemSpec(
            base.problem_id,
            base.object_count,
            base.distinguishing_relation,
            base.params,
            randomize_position,
        )


def load_catalog(path: str | None = None) -> Catalog:
    if path is None:
        text = resources.files("psilearn.data").joinpath("catalog.json").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    raw = json.loads(text)
    tol = raw["tolerances"]
    noise = raw["noise"]
    sampler = raw["shape_sampler"]
    problems = {
        pid: ProblemSpec(
            problem_id=pid,
            object_count=int(p["object_count"]),
            distinguishing_relation=int(p["distinguishing_relation"]),
            params=dict(p.get("params", {})),
        )
        for pid, p in raw["problems"].items()
    }
    return Catalog(
        canvas_size=float(raw["canvas_size"]),
        touch_epsilon=float(tol["touch_epsilon"]),
        shape_moment_tolerance=float(tol["shape_moment_tolerance"]),
        same_size_tolerance=float(tol["same_size_tolerance"]),
        reflection_tolerance=float(tol["reflection_tolerance"]),
        binary_noise_sd=float(noise["binary_sd"]),
        distance_noise_fraction=float(noise["distance_fraction"]),
        vertex_count_min=int(sampler["vertex_count_min"]),
        vertex_count_max=int(sampler["vertex_count_max"]),
        radius_min_fraction=float(sampler["radius_min_fraction"]),
        min_angle_gap=float(sampler["min_angle_gap"]),
        max_placement_attempts=int(raw["max_placement_attempts"]),
        problems=problems,
        catalog_version=int(raw["catalog_version"]),
    )


_DEFAULT_CATALOG: Catalog | None = None


def default_catalog() -> Catalog:
    global _DEFAULT_CATALOG
    if _DEFAULT_CATALOG is None:
        _DEFAULT_CATALOG = load_catalog()
    return _DEFAULT_CATALOG


# ---------------------------------------------------------------------------
# Shape sampling and placement
# ---------------------------------------------------------------------------


def sample_star_polygon(rng: np.random.Generator, scale: float, catalog: Catalog) -> np.ndarray:
    """Random star-convex polygon centered (by area centroid) at the origin.

    Vertices sit at sorted random angles with radii in
    [radius_min_fraction, 1] * scale, which keeps the contour simple.
    """
    nv = int(rng.integers(catalog.vertex_count_min, catalog.vertex_count_max + 1))
    for _ in range(64):
        angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, nv))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 2.0 * math.pi]]))
        if gaps.min() >= catalog.min_angle_gap:
            break
    radii = rng.uniform(catalog.radius_min_fraction, 1.0, nv) * scale
    verts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    verts = geo.ensure_ccw(verts)
    return verts - geo.polygon_centroid(verts)


def scale_to_area(centered_vertices: np.ndarray, target_area: float) -> np.ndarray:
    """Uniformly rescale a centroid-centered polygon to an exact target area."""
    area = geo.polygon_area(centered_vertices)
    if area <= 1e-12:
        raise ValueError("cannot rescale a degenerate polygon")
    return centered_vertices * math.sqrt(target_area / area)


def _place(centered_vertices: np.ndarray, position: np.ndarray, scale: float) -> SceneObject:
    verts = centered_vertices + position
    return SceneObject(Shape(verts), centroid=np.asarray(position, float).copy(), scale=scale)


def _max_radius(centered_vertices: np.ndarray) -> float:
    return float(np.max(np.hypot(centered_vertices[:, 0], centered_vertices[:, 1])))


def _fits_canvas(obj_vertices: np.ndarray, canvas: float, margin: float = 1.0) -> bool:
    xmin, ymin, xmax, ymax = geo.polygon_bounds(obj_vertices)
    return xmin >= margin and ymin >= margin and xmax <= canvas - margin and ymax <= canvas - margin


def _uniform_position(rng: np.random.Generator, canvas: float, radius: float) -> np.ndarray:
    lo = radius + 1.0
    hi = canvas - radius - 1.0
    if hi <= lo:
        raise GenerationError(f"object of radius {radius:.1f} cannot fit on the canvas")
    return rng.uniform(lo, hi, 2)


def _place_at_gap(
    rng: np.random.Generator,
    anchor: np.ndarray,
    moving: np.ndarray,
    gap_lo: float,
    gap_hi: float,
    attempts: int = 40,
) -> np.ndarray | None:
    """Offset for `moving` (centered at origin) so the boundary gap from
    `anchor` (already placed) lands inside [gap_lo, gap_hi].

    Bisects the gap along a random direction from the anchor's centroid; the
    gap grows monotonically with distance once the shapes separate.
    """
    anchor_c = geo.polygon_centroid(anchor)
    r_m = _max_radius(moving)
    for _ in range(attempts):
        direction = rng.uniform(0.0, 2.0 * math.pi)
        u = np.array([math.cos(direction), math.sin(direction)])
        t_lo = 0.0
        t_hi = _max_radius(anchor - anchor_c) + r_m + gap_hi + 2.0
        for _ in range(60):
            t = 0.5 * (t_lo + t_hi)
            gap = geo.min_boundary_distance(anchor, moving + anchor_c + t * u)
            if gap < gap_lo:
                t_lo = t
            elif gap > gap_hi:
                t_hi = t
            else:
                return anchor_c + t * u
            if t_hi - t_lo < 1e-9:
                break
    return None


# ---------------------------------------------------------------------------
# Pairwise relations
# ---------------------------------------------------------------------------


def rel_inside(a: SceneObject, b: SceneObject) -> int:
    """1 iff every vertex of a lies strictly within polygon b (even-odd test)."""
    return int(bool(np.all(geo.points_in_polygon(a.vertices, b.vertices))))


def rel_touching(a: SceneObject, b: SceneObject, catalog: Catalog | None = None) -> int:
    """1 iff the boundaries come within touch_epsilon and neither contains the other."""
    cat = catalog or default_catalog()
    if rel_inside(a, b) or rel_inside(b, a):
        return 0
    return int(geo.min_boundary_distance(a.vertices, b.vertices) <= cat.touch_epsilon)

def _moment_distance(a: SceneObject, b: SceneObject) -> float:
    return float(np.max(np.abs(geo.normalized_moments(a.vertices) - geo.normalized_moments(b.vertices))))


def rel_same_shape(a: SceneObject, b: SceneObject, catalog: Catalog | None = None) -> int:
    """1 iff the normalized central moment signatures agree in max norm."""
    cat = catalog or default_catalog()
    return int(_moment_distance(a, b) <= cat.shape_moment_tolerance)


def rel_normalized_distance(a: SceneObject, b: SceneObject, catalog: Catalog | None = None) -> float:
    """Centroid distance divided by the canvas diagonal."""
    cat = catalog or default_catalog()
    d = float(np.hypot(*(a.centroid - b.centroid)))
    return d / (cat.canvas_size * math.sqrt(2.0))


def rel_mirrored(a: SceneObject, b: SceneObject, catalog: Catalog | None = None) -> int:
    """1 iff a's shape reflected about its own vertical axis matches b's shape.

    Shape-level mirror identity: positions play no role, only the contour.
    """
    cat = catalog or default_catalog()
    mirrored = geo.mirror_polygon_x(a.vertices, float(a.centroid[0]))
    d = float(np.max(np.abs(geo.normalized_moments(mirrored) - geo.normalized_moments(b.vertices))))
    return int(d <= cat.shape_moment_tolerance)


def rel_same_size(a: SceneObject, b: SceneObject, catalog: Catalog | None = None) -> int:
    cat = catalog or default_catalog()
    aa, ab = a.area, b.area
    return int(abs(aa - ab) / max(aa, ab) <= cat.same_size_tolerance)


def rel_reflection(a: SceneObject, b: SceneObject, catalog: Catalog | None = None) -> int:
    """1 iff the centroids mirror about the canvas vertical bisector x = C/2."""
    cat = catalog or default_catalog()
    mirrored = np.array([cat.canvas_size - a.centroid[0], a.centroid[1]])
    return int(float(np.hypot(*(mirrored - b.centroid))) <= cat.reflection_tolerance)


def extract_relations(
    scene: Scene, catalog: Catalog | None = None
) -> dict[tuple[int, int], RelationVector]:
    """Clean relation vectors for every ordered object pair.

    Inside is directional (value for pair (s, r) is "s inside r"); all other
    relations are symmetric and equal in both directions.
    """
    cat = catalog or default_catalog()
    objs = scene.objects
    n = len(objs)
    if n < 2:
        raise ValueError("relation extraction needs at least 2 objects")
    out: dict[tuple[int, int], RelationVector] = {}
    for i in range(n):
        for j in range(i + 1, n):
            sym = np.zeros(NUM_RELATIONS)
            sym[REL_TOUCHING] = rel_touching(objs[i], objs[j], cat)
            sym[REL_SAME_SHAPE] = rel_same_shape(objs[i], objs[j], cat)
            sym[REL_DISTANCE] = rel_normalized_distance(objs[i], objs[j], cat)
            sym[REL_MIRRORED] = rel_mirrored(objs[i], objs[j], cat)
            sym[REL_SAME_SIZE] = rel_same_size(objs[i], objs[j], cat)
            sym[REL_REFLECTION] = rel_reflection(objs[i], objs[j], cat)
            fwd = sym.copy()
            bwd = sym.copy()
            fwd[REL_INSIDE] = rel_inside(objs[i], objs[j])
            bwd[REL_INSIDE] = rel_inside(objs[j], objs[i])
            out[(i, j)] = RelationVector(fwd)
            out[(j, i)] = RelationVector(bwd)
    return out


def add_relation_noise(
    clean: RelationVector, rng: np.random.Generator, catalog: Catalog | None = None
) -> RelationVector:
    """Gaussian noise per relation value, clamped back into [0, 1].

    Binary relations get sd = binary_noise_sd; normalized distance gets
    sd = distance_noise_fraction * clean value (so a zero distance stays zero).
    """
    cat = catalog or default_catalog()
    sds = np.full(NUM_RELATIONS, cat.binary_noise_sd)
    sds[REL_DISTANCE] = cat.distance_noise_fraction * clean[REL_DISTANCE]
    noisy = clean.values + sds * rng.standard_normal(NUM_RELATIONS)
    return RelationVector(noisy)


# ---------------------------------------------------------------------------
# Problem generators
# ---------------------------------------------------------------------------


def _gen_inside(spec: ProblemSpec, label: str, rng: np.random.Generator, cat: Catalog) -> Scene:
    p = spec.params
    big_area = rng.uniform(*p["big_area_range"])
    small_area = rng.uniform(*p["small_area_range"])
    big = scale_to_area(sample_star_polygon(rng, math.sqrt(big_area / 1.8), cat), big_area)
    small = scale_to_area(sample_star_polygon(rng, math.sqrt(small_area / 1.8), cat), small_area)
    r_big = _max_radius(big)
    r_small = _max_radius(small)
    gap_lo, gap_hi = p["outside_gap_range"]
    # Same placement margin for both classes so the container's position
    # distribution carries no class signal.
    reach = r_big + 2.0 * r_small + gap_hi + 2.0
    if spec.randomize_position:
        big_pos = _uniform_position(rng, cat.canvas_size, reach)
    else:
        big_pos = np.full(2, cat.canvas_size / 2.0)
    big_obj = _place(big, big_pos, math.sqrt(big_area / 1.8))

    if label == "positive":
        budget = p["inside_offset_fraction"] * r_big
        offset_r = rng.uniform(0.0, budget)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        pos = big_pos + offset_r * np.array([math.cos(theta), math.sin(theta)])
        candidate = _place(small, pos, math.sqrt(small_area / 1.8))
        if rel_inside(candidate, big_obj) != 1:
            raise GenerationError("containment placement failed")
        if not np.all(geo.points_in_polygon(candidate.vertices, big_obj.vertices)):
            raise GenerationError("containment placement failed")
        return Scene((candidate, big_obj), label, spec.problem_id, spec.distinguishing_relation)

    pos = _place_at_gap(rng, big_obj.vertices, small, gap_lo, gap_hi, attempts=4)
    if pos is None:
        raise GenerationError("outside placement failed to reach the target gap")
    candidate = _place(small, pos, math.sqrt(small_area / 1.8))
    if not _fits_canvas(candidate.vertices, cat.canvas_size):
        raise GenerationError("outside placement left the canvas")
    if rel_inside(candidate, big_obj) or rel_inside(big_obj, candidate):
        raise GenerationError("outside placement still contained")
    if rel_touching(candidate, big_obj, cat):
        raise GenerationError("outside placement touches the container")
    return Scene((candidate, big_obj), label, spec.problem_id, spec.distinguishing_relation)


def _gen_touch(spec: ProblemSpec, label: str, rng: np.random.Generator, cat: Catalog) -> Scene:
    p = spec.params
    area_a = rng.uniform(*p["area_range"])
    area_b = rng.uniform(*p["area_range"])
    va = scale_to_area(sample_star_polygon(rng, math.sqrt(area_a / 1.8), cat), area_a)
    vb = scale_to_area(sample_star_polygon(rng, math.sqrt(area_b / 1.8), cat), area_b)
    gap_range = p["touch_gap_range"] if label == "positive" else p["apart_gap_range"]
    reach = _max_radius(va) + 2.0 * _max_radius(vb) + p["apart_gap_range"][1] + 2.0
    pos_a = (
        _uniform_position(rng, cat.canvas_size, reach)
        if spec.randomize_position
        else np.full(2, cat.canvas_size / 2.0)
    )
    obj_a = _place(va, pos_a, math.sqrt(area_a / 1.8))
    pos_b = _place_at_gap(rng, obj_a.vertices, vb, gap_range[0], gap_range[1], attempts=4)
    if pos_b is None:
        raise GenerationError("gap placement failed")
    obj_b = _place(vb, pos_b, math.sqrt(area_b / 1.8))
    if not _fits_canvas(obj_b.vertices, cat.canvas_size):
        raise GenerationError("gap placement left the canvas")
    touching = rel_touching(obj_a, obj_b, cat)
    if label == "positive" and touching != 1:
        raise GenerationError("touch placement missed contact")
    if label == "negative" and touching != 0:
        raise GenerationError("apart placement still touches")
    if rel_inside(obj_a, obj_b) or rel_inside(obj_b, obj_a):
        raise GenerationError("unexpected containment")
    return Scene((obj_a, obj_b), label, spec.problem_id, spec.distinguishing_relation)


def _sampled_distinct_pair(
    rng: np.random.Generator, area: tuple[float, float], min_gap: float, cat: Catalog
) -> tuple[np.ndarray, np.ndarray]:
    """Two shapes with clearly different moment signatures, equal exact areas."""
    for _ in range(50):
        a1 = rng.uniform(*area)
        va = scale_to_area(sample_star_polygon(rng, math.sqrt(a1 / 1.8), cat), a1)
        vb = scale_to_area(sample_star_polygon(rng, math.sqrt(a1 / 1.8), cat), a1)
        d = float(np.max(np.abs(geo.normalized_moments(va) - geo.normalized_moments(vb))))
        if d >= min_gap:
            return va, vb
    raise GenerationError("could not sample two distinct shapes")


def _place_two_clear(
    spec: ProblemSpec,
    rng: np.random.Generator,
    cat: Catalog,
    va: np.ndarray,
    vb: np.ndarray,
    clearance: tuple[float, float],
) -> tuple[SceneObject, SceneObject]:
    """Place two centered shapes with a boundary gap inside `clearance`."""
    reach = _max_radius(va) + 2.0 * _max_radius(vb) + clearance[1] + 2.0
    pos_a = (
        _uniform_position(rng, cat.canvas_size, reach)
        if spec.randomize_position
        else np.full(2, cat.canvas_size / 2.0)
    )
    obj_a = _place(va, pos_a, _max_radius(va))
    pos_b = _place_at_gap(rng, obj_a.vertices, vb, clearance[0], clearance[1], attempts=4)
    if pos_b is None:
        raise GenerationError("clearance placement failed")
    obj_b = _place(vb, pos_b, _max_radius(vb))
    if not _fits_canvas(obj_b.vertices, cat.canvas_size):
        raise GenerationError("clearance placement left the canvas")
    return obj_a, obj_b


def _gen_same_shape(spec: ProblemSpec, label: str, rng: np.random.Generator, cat: Catalog) -> Scene:
    p = spec.params
    if label == "positive":
        a1 = rng.uniform(*p["area_range"])
        va = scale_to_area(sample_star_polygon(rng, math.sqrt(a1 / 1.8), cat), a1)
        vb = va.copy()  # congruent up to translation
    else:
        va, vb = _sampled_distinct_pair(rng, tuple(p["area_range"]), p["min_moment_gap"], cat)
    obj_a, obj_b = _place_two_clear(spec, rng, cat, va, vb, tuple(p["clearance_range"]))
    got = rel_same_shape(obj_a, obj_b, cat)
    want = 1 if label == "positive" else 0
    if got != want:
        raise GenerationError("shape identity constraint violated")
    return Scene((obj_a, obj_b), label, spec.problem_id, spec.distinguishing_relation)


def _gen_reflect(spec: ProblemSpec, label: str, rng: np.random.Generator, cat: Catalog) -> Scene:
    p = spec.params
    area_a = rng.uniform(*p["area_range"])
    area_b = rng.uniform(*p["area_range"])
    va = scale_to_area(sample_star_polygon(rng, math.sqrt(area_a / 1.8), cat), area_a)
    vb = scale_to_area(sample_star_polygon(rng, math.sqrt(area_b / 1.8), cat), area_b)
    half = cat.canvas_size / 2.0
    d_min = p["min_half_separation"]
    r_max = max(_max_radius(va), _max_radius(vb))
    margin = r_max + 2.0

    for _ in range(20):
        d = rng.uniform(d_min, half - margin)
        if spec.randomize_position:
            y = rng.uniform(margin, cat.canvas_size - margin)
        else:
            y = half
        p1 = np.array([half - d, y])
        p2 = np.array([half + d, y])
        if label == "negative":
            # Same pair of locations rotated about the midpoint: pairwise
            # distance is preserved while the mirror constraint breaks.
            theta = rng.uniform(0.45, 2.0 * math.pi - 0.45)
            if 2.0 * d * abs(math.sin(theta)) < p["min_mirror_error"]:
                continue
            c, s = math.cos(theta), math.sin(theta)
            rot = np.array([[c, -s], [s, c]])
            mid = np.array([half, y])
            p1 = mid + rot @ (p1 - mid)
            p2 = mid + rot @ (p2 - mid)
        obj_a = _place(va, p1, math.sqrt(area_a / 1.8))
        obj_b = _place(vb, p2, math.sqrt(area_b / 1.8))
        if not (_fits_canvas(obj_a.vertices, cat.canvas_size) and _fits_canvas(obj_b.vertices, cat.canvas_size)):
            continue
        if geo.min_boundary_distance(obj_a.vertices, obj_b.vertices) < p["min_clearance"]:
            continue
        got = rel_reflection(obj_a, obj_b, cat)
        want = 1 if label == "positive" else 0
        if got != want:
            continue
        return Scene((obj_a, obj_b), label, spec.problem_id, spec.distinguishing_relation)
    raise GenerationError("reflection placement failed")


def _gen_same_size(spec: ProblemSpec, label: str, rng: np.random.Generator, cat: Catalog) -> Scene:
    p = spec.params
    base = rng.uniform(*p["base_area_range"])
    if label == "positive":
        areas = (base, base)
    else:
        # Mean-preserving spread: areas c*k*base and (c/k)*base average to
        # base exactly while their ratio k^2 stays >= 2.
        k = rng.uniform(*p["spread_range"])
        c = 2.0 * k / (k * k + 1.0)
        areas = (base * c * k, base * c / k)
    for _ in range(50):
        va = scale_to_area(sample_star_polygon(rng, math.sqrt(areas[0] / 1.8), cat), areas[0])
        vb = scale_to_area(sample_star_polygon(rng, math.sqrt(areas[1] / 1.8), cat), areas[1])
        d = float(np.max(np.abs(geo.normalized_moments(va) - geo.normalized_moments(vb))))
        if d >= p["min_moment_gap"]:
            break
    else:
        raise GenerationError("could not sample distinct shapes")
    obj_a, obj_b = _place_two_clear(spec, rng, cat, va, vb, tuple(p["clearance_range"]))
    got = rel_same_size(obj_a, obj_b, cat)
    want = 1 if label == "positive" else 0
    if got != want:
        raise GenerationError("size constraint violated")
    return Scene((obj_a, obj_b), label, spec.problem_id, spec.distinguishing_relation)


_GENERATORS: dict[str, Callable[[ProblemSpec, str, np.random.Generator, Catalog], Scene]] = {
    "P-INSIDE": _gen_inside,
    "P-TOUCH": _gen_touch,
    "P-SAMESHAPE": _gen_same_shape,
    "P-REFLECT": _gen_reflect,
    "P-SAMESIZE": _gen_same_size,
}

BUILTIN_PROBLEMS = tuple(sorted(_GENERATORS))


def generate_scene(
    spec: ProblemSpec,
    label: str,
    rng: np.random.Generator,
    catalog: Catalog | None = None,
) -> Scene:
    """Generate one scene satisfying the problem's class rule exactly (pre-noise).

    Rejection sampling is capped by the catalog's max_placement_attempts; on
    exhaustion a GenerationError names the violated constraint.
    """
    cat = catalog or default_catalog()
    if label not in ("positive", "negative"):
        raise ValueError(f"invalid label {label!r}")
    if spec.problem_id not in _GENERATORS:
        raise KeyError(f"no generator for problem {spec.problem_id!r}")
    gen = _GENERATORS[spec.problem_id]
    last_error: GenerationError | None = None
    for _ in range(cat.max_placement_attempts):
        try:
            return gen(spec, label, rng, cat)
        except GenerationError as exc:
            last_error = exc
    raise GenerationError(
        f"{spec.problem_id} {label}: placement failed after "
        f"{cat.max_placement_attempts} attempts ({last_error})"
    )


# ---------------------------------------------------------------------------
# Serialization and rendering
# ---------------------------------------------------------------------------


def scene_to_dict(scene: Scene) -> dict:
    return {
        "problem_id": scene.problem_id,
        "label": scene.label,
        "distinguishing_relation": scene.distinguishing_relation,
        "objects": [
            {
                "vertices": [[float(x), float(y)] for x, y in o.vertices],
                "centroid": [float(o.centroid[0]), float(o.centroid[1])],
                "scale": float(o.scale),
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(d: dict) -> Scene:
    objects = tuple(
        SceneObject(
            Shape(np.asarray(o["vertices"], dtype=float)),
            centroid=np.asarray(o["centroid"], dtype=float),
            scale=float(o["scale"]),
        )
        for o in d["objects"]
    )
    return Scene(objects, d["label"], d["problem_id"], int(d["distinguishing_relation"]))


def scene_to_svg(scene: Scene, catalog: Catalog | None = None) -> str:
    """Small standalone SVG rendering of a scene, for documentation."""
    cat = catalog or default_catalog()
    c = cat.canvas_size
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {c:g} {c:g}" '
        f'width="256" height="256">',
        f'<rect x="0" y="0" width="{c:g}" height="{c:g}" fill="white" stroke="black"/>',
    ]
    for obj in scene.objects:
        pts = " ".join(f"{x:.2f},{c - y:.2f}" for x, y in obj.vertices)
        parts.append(f'<polygon points="{pts}" fill="none" stroke="black" stroke-width="1"/>')
    parts.append(
        f'<text x="3" y="12" font-size="8">{scene.problem_id} / {scene.label}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)
