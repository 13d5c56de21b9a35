"""Handcrafted feature extractors: object descriptors, a whole-scene
occupancy descriptor, and grid-patch descriptors.

These stand in for learned image embeddings behind a pluggable interface;
extractor choice is by name ("object", "global", "patch"). All extractors are
deterministic functions of the scene geometry.
"""

from __future__ import annotations

import math

import numpy as np

from . import geometry as geo
from .relgraph import NUM_RELATIONS, ObjectGraph
from .scenegen import Catalog, Scene, SceneObject, add_relation_noise, default_catalog, extract_relations

OBJECT_DESCRIPTOR_DIM = 16
GLOBAL_GRID = 16
PATCH_GRID = 4
PATCH_DESCRIPTOR_DIM = 16


def object_descriptor(obj: SceneObject, catalog: Catalog | None = None) -> np.ndarray:
    """16-real descriptor of a single object.

    Layout: normalized centroid x, y; sqrt(area)/C; perimeter/(4C);
    compactness 4*pi*A/P^2; covariance-ellipse eccentricity; cos/sin of the
    principal axis; the seven normalized central moments; one reserved zero.
    The moment block is translation- and scale-invariant, the centroid block
    is position-sensitive.
    """
    cat = catalog or default_catalog()
    c = cat.canvas_size
    verts = obj.vertices
    mu = geo.polygon_central_moments(verts)
    area = mu["mu00"]
    if area < 1e-9:
        raise ValueError("degenerate polygon: area below 1e-9")
    perimeter = geo.polygon_perimeter(verts)
    compactness = 4.0 * math.pi * area / (perimeter * perimeter)

    # Covariance of the filled region; eigenvalues give the ellipse axes.
    cxx = mu["mu20"] / area
    cxy = mu["mu11"] / area
    cyy = mu["mu02"] / area
    tr = cxx + cyy
    det = cxx * cyy - cxy * cxy
    disc = max(tr * tr / 4.0 - det, 0.0)
    lam1 = tr / 2.0 + math.sqrt(disc)
    lam2 = tr / 2.0 - math.sqrt(disc)
    ecc = math.sqrt(max(1.0 - lam2 / lam1, 0.0)) if lam1 > 1e-12 else 0.0
    theta = 0.5 * math.atan2(2.0 * cxy, cxx - cyy)

    centroid = geo.polygon_centroid(verts)
    out = np.zeros(OBJECT_DESCRIPTOR_DIM)
    out[0] = centroid[0] / c
    out[1] = centroid[1] / c
    out[2] = math.sqrt(area) / c
    out[3] = perimeter / (4.0 * c)
    out[4] = min(compactness, 1.0)
    out[5] = ecc
    out[6] = math.cos(theta)
    out[7] = math.sin(theta)
    out[8:15] = geo.normalized_moments(verts)
    # out[15] reserved, fixed at 0
    return out


def _coverage_grid(scene: Scene, cells: int, samples_per_cell: int, canvas: float) -> np.ndarray:
    """Fraction of each grid cell covered by any object, via supersampled
    point-in-polygon tests. Returns (cells, cells), row-major in y then x."""
    m = cells * samples_per_cell
    step = canvas / m
    coords = (np.arange(m) + 0.5) * step
    xx, yy = np.meshgrid(coords, coords)
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    covered = np.zeros(len(pts), dtype=bool)
    for obj in scene.objects:
        covered |= geo.points_in_polygon(pts, obj.vertices)
    grid = covered.reshape(m, m)
    frac = grid.reshape(cells, samples_per_cell, cells, samples_per_cell)
    return frac.mean(axis=(1, 3))


def global_descriptor(scene: Scene, catalog: Catalog | None = None) -> np.ndarray:
    """256-real occupancy descriptor: 16x16 grid coverage, row-major."""
    cat = catalog or default_catalog()
    return _coverage_grid(scene, GLOBAL_GRID, 8, cat.canvas_size).ravel()


def patch_descriptors(scene: Scene, catalog: Catalog | None = None) -> np.ndarray:
    """4x4 grid of 16-real cell descriptors, shape (16, 16).

    Per cell: occupancy fraction; centroid of the covered area in cell
    coordinates; second and third central moments of the covered area
    (cell-normalized); zero padding. Empty cells are all-zero.
    """
    cat = catalog or default_catalog()
    canvas = cat.canvas_size
    cell_size = canvas / PATCH_GRID
    sub = 16
    step = cell_size / sub
    offsets = (np.arange(sub) + 0.5) * step
    ox, oy = np.meshgrid(offsets, offsets)

    out = np.zeros((PATCH_GRID * PATCH_GRID, PATCH_DESCRIPTOR_DIM))
    for row in range(PATCH_GRID):
        for col in range(PATCH_GRID):
            base = np.array([col * cell_size, row * cell_size])
            pts = np.stack([(base[0] + ox).ravel(), (base[1] + oy).ravel()], axis=1)
            covered = np.zeros(len(pts), dtype=bool)
            for obj in scene.objects:
                covered |= geo.points_in_polygon(pts, obj.vertices)
            idx = row * PATCH_GRID + col
            if not covered.any():
                continue
            sel = (pts[covered] - base) / cell_size  # cell-local, in [0, 1]
            occ = covered.mean()
            cx, cy = sel.mean(axis=0)
            dx = sel[:, 0] - cx
            dy = sel[:, 1] - cy
            out[idx, 0] = occ
            out[idx, 1] = cx
            out[idx, 2] = cy
            out[idx, 3] = np.mean(dx * dx)
            out[idx, 4] = np.mean(dx * dy)
            out[idx, 5] = np.mean(dy * dy)
            out[idx, 6] = np.mean(dx * dx * dx)
            out[idx, 7] = np.mean(dx * dx * dy)
            out[idx, 8] = np.mean(dx * dy * dy)
            out[idx, 9] = np.mean(dy * dy * dy)
    return out


def scene_to_graph(
    scene: Scene,
    rng: np.random.Generator | None = None,
    catalog: Catalog | None = None,
) -> ObjectGraph:
    """Object-relation graph of a scene.

    Nodes are object descriptors in scene order; edges hold the ground-truth
    relations, with Gaussian noise applied when an rng is given (pass None
    for zero-noise mode). Noise draws consume the rng in (sender, receiver)
    lexicographic pair order, so graphs are reproducible from a seeded rng.
    """
    cat = catalog or default_catalog()
    nodes = np.stack([object_descriptor(o, cat) for o in scene.objects])
    relations = extract_relations(scene, cat)
    n = len(scene.objects)
    edges = np.zeros((n, n, NUM_RELATIONS))
    for s in range(n):
        for r in range(n):
            if s == r:
                continue
            vec = relations[(s, r)]
            if rng is not None:
                vec = add_relation_noise(vec, rng, cat)
            edges[s, r] = vec.values
    return ObjectGraph(nodes, edges)


def patch_graph(scene: Scene, catalog: Catalog | None = None) -> ObjectGraph:
    """Edgeless 16-node graph of grid-patch descriptors."""
    return ObjectGraph(patch_descriptors(scene, catalog), None)
