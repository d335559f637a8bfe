"""Polylines approximating unstable, stable and center curves."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import group
from .dynamics import NilDiffeo, estimate_bundle, estimate_splitting


class RoughField(RuntimeError):
    pass


@dataclass
class CurvePolyline:
    points: np.ndarray
    step: float
    bundle: str = "u"
    center_index: int = 0

    @property
    def segment_lengths(self) -> np.ndarray:
        pts = self.points
        mids = 0.5 * (pts[1:] + pts[:-1])
        return group.frame_norm(mids, np.diff(pts, axis=0))

    @property
    def arclength(self) -> np.ndarray:
        """Signed arclength measured from the base point."""
        s = np.concatenate([[0.0], np.cumsum(self.segment_lengths)])
        return s - s[self.center_index]

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())

    @property
    def endpoints(self) -> np.ndarray:
        return self.points[[0, -1]]

    def to_csv(self) -> str:
        rows = ["x,y,z"] + [f"{x:.17g},{y:.17g},{z:.17g}" for x, y, z in self.points]
        return "\n".join(rows) + "\n"


def bundle_field(f: NilDiffeo, bundle: str, horizon: int):
    def field(p):
        return group.frame_to_ambient(p, estimate_bundle(f, p, horizon, bundle))

    return field


def rk4_step(field, p, h, ref=None):
    """One RK4 step along a line field; stage directions are aligned with ref."""
    def aligned(v, r):
        if r is None:
            return v
        sign = np.sign(np.sum(v * r, axis=-1, keepdims=True))
        return v * np.where(sign == 0, 1.0, sign)

    h = np.asarray(h, dtype=float)[..., None] if np.ndim(h) else h
    k1 = aligned(field(p), ref)
    k2 = aligned(field(p + 0.5 * h * k1), k1)
    k3 = aligned(field(p + 0.5 * h * k2), k1)
    k4 = aligned(field(p + h * k3), k1)
    return p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), k1, k4


def integrate_curve(f: NilDiffeo, p0, length: float, step: float, bundle: str = "u",
                    horizon: int = 20, max_turn: float = 0.3) -> CurvePolyline:
    """Integrate the unit bundle field by RK4 in arclength, length/2 each way from p0."""
    field = bundle_field(f, bundle, horizon)
    p0 = np.asarray(p0, dtype=float).reshape(3)
    half = 0.5 * length
    nsteps = max(1, int(np.ceil(half / step - 1e-9)))
    h = half / nsteps
    ref0 = field(p0)
    sides = []
    for sign in (1.0, -1.0):
        pts, p, ref = [p0], p0, sign * ref0
        for _ in range(nsteps):
            p, k1, k4 = rk4_step(field, p, h, ref)
            turn = np.arctan2(np.linalg.norm(np.cross(k1, k4)), abs(np.dot(k1, k4)))
            if turn > max_turn:
                raise RoughField("field too rough: step rejection cascade")
            ref = k4 * np.sign(np.dot(k4, k1))
            pts.append(p)
        sides.append(np.array(pts))
    points = np.concatenate([sides[1][::-1], sides[0][1:]])
    return CurvePolyline(points, h, bundle, center_index=nsteps)


def _seed(q0, e, s):
    """q0 * exp(s e): the one-parameter subgroup through q0 tangent to e."""
    return group.mul(q0, group.exp_h(np.outer(s, e)))


def _resample(points, step, center_index, half):
    mids = 0.5 * (points[1:] + points[:-1])
    seg = group.frame_norm(mids, np.diff(points, axis=0))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    s -= s[center_index]
    n = max(1, int(np.ceil(half / step - 1e-9)))
    h = half / n
    targets = np.arange(-n, n + 1) * h
    out = np.stack([np.interp(targets, s, points[:, i]) for i in range(3)], axis=-1)
    return out, h, n


def grow_curve(f: NilDiffeo, p0, length: float, step: float, bundle: str = "u",
               iterations: int = 12, horizon: int = 20, dense: int = 8) -> CurvePolyline:
    """Push a short seed segment through f^-m(p0) forward m times (f^-1 for stable
    curves), inserting seed parameters until the image is dense, then resample."""
    if bundle not in ("u", "s"):
        raise ValueError("grow mode needs an expanding bundle: 'u' or 's'")
    fwd, back = (f.apply, f.apply_inverse) if bundle == "u" else (f.apply_inverse, f.apply)
    p0 = np.asarray(p0, dtype=float).reshape(3)
    q0 = p0
    for _ in range(iterations):
        q0 = back(q0)
    split = estimate_splitting(f, q0, horizon)
    e = split.eU if bundle == "u" else split.eS

    def push(s):
        pts = _seed(q0, e, s)
        for _ in range(iterations):
            pts = fwd(pts)
        return pts

    half = 0.5 * length
    fine = step / dense
    a = 1.5 * half / f.lam ** iterations
    for _ in range(20):
        params = np.linspace(-a, a, 65)
        images = push(params)
        for _ in range(60):
            mids = 0.5 * (images[1:] + images[:-1])
            seg = group.frame_norm(mids, np.diff(images, axis=0))
            bad = np.nonzero(seg > fine)[0]
            if len(bad) == 0:
                break
            new_params = 0.5 * (params[bad] + params[bad + 1])
            new_images = push(new_params)
            params = np.insert(params, bad + 1, new_params)
            images = np.insert(images, bad + 1, new_images, axis=0)
        else:
            raise RoughField("field too rough: refinement did not converge")
        center = int(np.argmin(np.abs(params)))
        s = np.concatenate([[0.0], np.cumsum(seg)])
        s -= s[center]
        if s[0] <= -half and s[-1] >= half:
            break
        a *= 2.0
    else:
        raise RoughField("could not grow the seed to the requested length")
    images[center] = p0 if params[center] == 0 else images[center]
    points, h, n = _resample(images, step, center, half)
    return CurvePolyline(points, h, bundle, center_index=n)


def grow_unstable_curve(f: NilDiffeo, p0, target_length: float, step: float = 0.05,
                        mode: str = "grow", horizon: int = 20) -> CurvePolyline:
    if mode == "grow":
        return grow_curve(f, p0, target_length, step, "u", horizon=horizon)
    if mode == "integrate":
        return integrate_curve(f, p0, target_length, step, "u", horizon=horizon)
    raise ValueError(f"unknown mode {mode!r}")


def grow_stable_curve(f: NilDiffeo, p0, target_length: float, step: float = 0.05,
                      mode: str = "grow", horizon: int = 20) -> CurvePolyline:
    if mode == "grow":
        return grow_curve(f, p0, target_length, step, "s", horizon=horizon)
    return integrate_curve(f, p0, target_length, step, "s", horizon=horizon)


def _point_segment_distances(pts, a, b):
    d = b - a
    dd = np.maximum(np.sum(d * d, axis=-1), 1e-300)
    out = np.empty(len(pts))
    for start in range(0, len(pts), 256):
        chunk = pts[start:start + 256, None, :]
        t = np.clip(np.sum((chunk - a) * d, axis=-1) / dd, 0.0, 1.0)
        proj = a + t[..., None] * d
        out[start:start + 256] = np.sqrt(np.min(np.sum((chunk - proj) ** 2, axis=-1), axis=1))
    return out


def hausdorff(c1, c2) -> float:
    """Symmetric Euclidean Hausdorff distance between two polylines."""
    p1 = c1.points if isinstance(c1, CurvePolyline) else np.asarray(c1)
    p2 = c2.points if isinstance(c2, CurvePolyline) else np.asarray(c2)
    d12 = _point_segment_distances(p1, p2[:-1], p2[1:]).max()
    d21 = _point_segment_distances(p2, p1[:-1], p1[1:]).max()
    return float(max(d12, d21))
