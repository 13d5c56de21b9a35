"""2D polygon primitives used by the scene generator and feature extractors.

All polygons are (n, 2) float arrays of vertices in counter-clockwise order,
closed implicitly (last vertex connects back to the first).
"""

from __future__ import annotations

import numpy as np


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise vertex order."""
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_perimeter(vertices: np.ndarray) -> float:
    d = np.roll(vertices, -1, axis=0) - vertices
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    """Area centroid of a simple polygon."""
    x = vertices[:, 0]
    y = vertices[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    if abs(a) < 1e-12:
        return vertices.mean(axis=0)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def ensure_ccw(vertices: np.ndarray) -> np.ndarray:
    if polygon_area(vertices) < 0:
        return vertices[::-1].copy()
    return vertices


def polygon_bounds(vertices: np.ndarray) -> tuple[float, float, float, float]:
    """(xmin, ymin, xmax, ymax)."""
    mn = vertices.min(axis=0)
    mx = vertices.max(axis=0)
    return float(mn[0]), float(mn[1]), float(mx[0]), float(mx[1])


def points_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Even-odd (ray crossing) test for an array of points, shape (m, 2).

    Returns a boolean array. Points exactly on an edge follow the half-open
    crossing convention and are not handled specially.
    """
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    x1 = vertices[:, 0][None, :]
    y1 = vertices[:, 1][None, :]
    x2 = np.roll(vertices[:, 0], -1)[None, :]
    y2 = np.roll(vertices[:, 1], -1)[None, :]
    straddles = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
    crossings = straddles & (px < xint)
    return np.sum(crossings, axis=1) % 2 == 1


def point_in_polygon(point: np.ndarray, vertices: np.ndarray) -> bool:
    return bool(points_in_polygon(np.asarray(point, float)[None, :], vertices)[0])


def _segment_point_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.hypot(*(p - a)))
    t = np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
    return float(np.hypot(*(p - (a + t * ab))))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return False


def segment_segment_distance(p1, p2, q1, q2) -> float:
    if _segments_intersect(p1, p2, q1, q2):
        return 0.0
    return min(
        _segment_point_distance(q1, p1, p2),
        _segment_point_distance(q2, p1, p2),
        _segment_point_distance(p1, q1, q2),
        _segment_point_distance(p2, q1, q2),
    )


def min_boundary_distance(poly_a: np.ndarray, poly_b: np.ndarray) -> float:
    """Minimum distance between two polygon boundaries (0 if they cross)."""
    na = len(poly_a)
    nb = len(poly_b)
    best = np.inf
    for i in range(na):
        a1 = poly_a[i]
        a2 = poly_a[(i + 1) % na]
        for j in range(nb):
            d = segment_segment_distance(a1, a2, poly_b[j], poly_b[(j + 1) % nb])
            if d < best:
                best = d
                if best == 0.0:
                    return 0.0
    return float(best)


def polygon_raw_moments(vertices: np.ndarray) -> dict[str, float]:
    """Area moments m_pq up to third order via Green's theorem closed forms.

    Exact for simple polygons with CCW orientation (m00 = area > 0).
    """
    x = vertices[:, 0]
    y = vertices[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    c = x * yn - xn * y
    m = {
        "m00": np.sum(c) / 2.0,
        "m10": np.sum((x + xn) * c) / 6.0,
        "m01": np.sum((y + yn) * c) / 6.0,
        "m20": np.sum((x * x + x * xn + xn * xn) * c) / 12.0,
        "m11": np.sum((2 * x * y + x * yn + xn * y + 2 * xn * yn) * c) / 24.0,
        "m02": np.sum((y * y + y * yn + yn * yn) * c) / 12.0,
        "m30": np.sum((x**3 + x * x * xn + x * xn * xn + xn**3) * c) / 20.0,
        "m21": np.sum((yn * (3 * xn * xn + 2 * xn * x + x * x)
                       + y * (xn * xn + 2 * xn * x + 3 * x * x)) * c) / 60.0,
        "m12": np.sum((xn * (3 * yn * yn + 2 * yn * y + y * y)
                       + x * (yn * yn + 2 * yn * y + 3 * y * y)) * c) / 60.0,
        "m03": np.sum((y**3 + y * y * yn + y * yn * yn + yn**3) * c) / 20.0,
    }
    return {k: float(v) for k, v in m.items()}


def polygon_central_moments(vertices: np.ndarray) -> dict[str, float]:
    """Central area moments mu_pq up to third order (translation invariant)."""
    centered = vertices - polygon_centroid(vertices)
    m = polygon_raw_moments(centered)
    return {
        "mu00": m["m00"],
        "mu20": m["m20"],
        "mu11": m["m11"],
        "mu02": m["m02"],
        "mu30": m["m30"],
        "mu21": m["m21"],
        "mu12": m["m12"],
        "mu03": m["m03"],
    }


# Order of the scale-normalized central moments used as a shape signature.
NORMALIZED_MOMENT_KEYS = ("20", "11", "02", "30", "21", "12", "03")


def normalized_moments(vertices: np.ndarray) -> np.ndarray:
    """Seven normalized central moments eta_pq, (p+q) in {2, 3}.

    eta_pq = mu_pq / mu00^(1 + (p+q)/2): invariant to translation and uniform
    scaling, sensitive to shape and rotation.
    """
    mu = polygon_central_moments(vertices)
    a = mu["mu00"]
    if a <= 1e-12:
        raise ValueError("degenerate polygon: area too small for moments")
    out = np.empty(7)
    for i, key in enumerate(NORMALIZED_MOMENT_KEYS):
        p, q = int(key[0]), int(key[1])
        out[i] = mu[f"mu{key}"] / a ** (1.0 + 0.5 * (p + q))
    return out


def mirror_polygon_x(vertices: np.ndarray, axis_x: float) -> np.ndarray:
    """Reflect about the vertical line x = axis_x, keeping CCW orientation."""
    flipped = vertices.copy()
    flipped[:, 0] = 2.0 * axis_x - flipped[:, 0]
    return flipped[::-1].copy()
