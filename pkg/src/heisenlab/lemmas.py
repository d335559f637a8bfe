"""Sampling falsifiers for the quantitative lemmas about systems in diagonal normal form.

Every verifier takes a NilDiffeo whose algebraic part is diag(1/lam, lam, 1) (see
``dynamics.normal_form``) and returns a CheckReport with its sample count and the
worst observed margin (negative margin = counterexample).
"""
from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import cKDTree

from . import group
from .curves import CurvePolyline, grow_stable_curve, grow_unstable_curve, rk4_step, bundle_field
from .dynamics import NilDiffeo, estimate_constants, estimate_splitting, invariance_residuals
from .report import CheckReport


def _require_diagonal(f: NilDiffeo, tol: float = 1e-9) -> float:
    T = f.matrix.matrix
    lam = f.lam
    target = np.diag([1.0 / lam, lam, 1.0])
    if np.max(np.abs(T - target)) > tol * max(1.0, lam):
        raise ValueError("verifier needs a system in diagonal normal form (use normal_form)")
    return lam


def _algebraic(f: NilDiffeo):
    return f.algebraic_part


def projection_sup(f: NilDiffeo, count: int, rng) -> tuple:
    """sup |pi_s f - pi_s Phi| and sup |pi_u f - pi_u Phi|; both differences are
    lattice-periodic, so sampling one fundamental domain suffices."""
    phi = _algebraic(f)
    pts = f.sample_fundamental(count, rng)
    d = f(pts) - phi(pts)
    return float(np.max(np.abs(d[:, 0]))), float(np.max(np.abs(d[:, 1])))


# -- slab invariance -------------------------------------------------------------

def verify_xbound(f: NilDiffeo, samples: int = 10_000, rng=None, spread: float = 50.0) -> CheckReport:
    """Pick x0 with x0/lam + C < x0 and test |x| <= x0 => |pi_s f| <= x0."""
    lam = _require_diagonal(f)
    rng = np.random.default_rng(rng)
    cs, _ = projection_sup(f, samples, rng)
    C = 1.05 * cs + 1e-12
    x0 = max(2.0 * C / (1.0 - 1.0 / lam), 1.0)

    def worst(x_bound, count):
        p = rng.uniform(-spread, spread, (count, 3))
        edge = rng.random(count) < 0.5
        p[:, 0] = np.where(edge, x_bound * rng.choice([-1.0, 1.0], count),
                           rng.uniform(-x_bound, x_bound, count))
        return float(np.min(x_bound - np.abs(group.proj_s(f(p)))))

    margin = worst(x0, samples)
    passed = margin >= -1e-12 and x0 / lam + C < x0
    details = {}
    if cs > 0:
        # below C/(1 - 1/lam) the implication must break somewhere: search the edge
        x_bad = 0.5 * C / (1.0 - 1.0 / lam)
        details = {"adversarial_x0": x_bad, "adversarial_margin": worst(x_bad, samples),
                   "adversarial_found": worst(x_bad, samples) < 0}
    return CheckReport("xbound", bool(passed), {"x0": x0, "C": C, "lambda": lam},
                       margin, samples, details)


# -- box growth --------------------------------------------------------------------

def slab_displacement(f: NilDiffeo, x0: float, count: int, rng, spread: float = 50.0) -> float:
    """Sup over the slab |x| <= x0 of the coordinate displacement |f - Phi| (y and z parts)."""
    phi = _algebraic(f)
    p = rng.uniform(-spread, spread, (count, 3))
    p[:, 0] = rng.uniform(-x0, x0, count)
    d = np.abs(f(p) - phi(p))
    return float(np.max(d[:, 1:]))


def _box_samples(rng, x0, y, z, count):
    """Points of B(x0, y, z): half on the boundary faces, half inside."""
    u = rng.uniform(-1.0, 1.0, (count, 3))
    face = rng.integers(0, 3, count)
    on_face = rng.random(count) < 0.5
    u[np.arange(count), face] = np.where(on_face, np.sign(u[np.arange(count), face]),
                                         u[np.arange(count), face])
    return u * np.stack([np.full(count, x0), y, z], axis=-1)


def verify_boxgrow(f: NilDiffeo, x0: float | None = None, samples: int = 10_000, n_max: int = 10,
                   beta_factor: float = 1.05, rng=None) -> CheckReport:
    """f(B(x0,y,z)) in B(x0, lam y + c, z + c), and the n-step form with beta > lam."""
    lam = _require_diagonal(f)
    rng = np.random.default_rng(rng)
    if x0 is None:
        x0 = verify_xbound(f, samples=min(samples, 2000), rng=rng).constants["x0"]
    c = 1.1 * slab_displacement(f, x0, samples, rng) + 1e-12
    slack = 1e-9

    # one step
    y = rng.uniform(0.5, 50.0, samples)
    z = rng.uniform(0.5, 50.0, samples)
    p = _box_samples(rng, x0, y, z, samples)
    q = f(p)
    m1 = np.minimum.reduce([x0 - np.abs(q[:, 0]), lam * y + c - np.abs(q[:, 1]), z + c - np.abs(q[:, 2])])
    worst_one = float(np.min(m1 / np.maximum(1.0, y)))

    # n-step form with beta > lam and y >= y0 where beta y0 > lam y0 + c
    beta = beta_factor * lam
    y0 = c / (beta - lam) * 1.01 + 1e-9
    count = max(1, samples // 10)
    y = y0 + rng.uniform(0.0, 10.0, count)
    z = rng.uniform(0.5, 20.0, count)
    p = _box_samples(rng, x0, y, z, count)
    worst_n = math.inf
    for n in range(1, n_max + 1):
        p = f(p)
        mn = np.minimum.reduce([x0 - np.abs(p[:, 0]), beta ** n * y - np.abs(p[:, 1]),
                                z + n * c - np.abs(p[:, 2])])
        worst_n = min(worst_n, float(np.min(mn / (beta ** n * y))))
    # margins are measured against the rounding-slack form of the inclusion
    margin = min(worst_one, worst_n) + slack
    return CheckReport("boxgrow", bool(margin >= 0),
                       {"c": c, "x0": x0, "beta": beta, "y0": y0, "lambda": lam, "n_max": n_max},
                       margin, samples + count, {"one_step_margin": worst_one, "n_step_margin": worst_n})


# -- expansion in the y-direction --------------------------------------------------

def verify_yexpand(f: NilDiffeo, alpha: float | None = None, pairs: int = 1000, n_max: int = 15,
                   rng=None) -> CheckReport:
    """|pi_u p - pi_u q| >= M implies |pi_u f^n p - pi_u f^n q| >= alpha^n |pi_u p - pi_u q|."""
    lam = _require_diagonal(f)
    rng = np.random.default_rng(rng)
    alpha = 0.9 * lam if alpha is None else alpha
    if not alpha < lam:
        raise ValueError("alpha must be below lam")
    _, cu = projection_sup(f, 4 * pairs, rng)
    C = 1.05 * cu
    M = max(2.0 * C / (lam - alpha) * 1.01, 1e-3) if C > 0 else 1.0
    p = f.sample_fundamental(pairs, rng)
    off = rng.uniform(-1.0, 1.0, (pairs, 3))
    off[:, 1] = rng.choice([-1.0, 1.0], pairs) * M * rng.uniform(1.0, 3.0, pairs)
    q = p + off
    gap0 = np.abs(q[:, 1] - p[:, 1])
    logs = [np.log(gap0)]
    worst = math.inf
    for n in range(1, n_max + 1):
        p, q = f(p), f(q)
        gap = np.abs(q[:, 1] - p[:, 1])
        logs.append(np.log(gap))
        worst = min(worst, float(np.min(np.log(gap) - np.log(gap0) - n * math.log(alpha))))
    L = np.array(logs)  # (n_max + 1, pairs)
    ns = np.arange(n_max + 1)
    slope = float(np.polyfit(ns, L.mean(axis=1), 1)[0])
    slope_ok = slope >= math.log(alpha) * 0.95
    return CheckReport("yexpand", bool(worst > 0 and slope_ok),
                       {"alpha": alpha, "M": M, "C": C, "lambda": lam, "fitted_exponent": slope,
                        "log_alpha": math.log(alpha)},
                       worst, pairs)


# -- unstable curves -----------------------------------------------------------------

def window_lengths(curve: CurvePolyline, M: float) -> tuple:
    """Longest sub-arc whose endpoints are within M in pi_u, and longest sub-arc whose
    whole pi_u range is within M. Beyond these lengths every sub-arc separates by M."""
    s = curve.arclength
    y = group.proj_u(curve.points)
    n = len(y)
    end_len = pair_len = 0.0
    for i in range(n - 1):
        ys = y[i:]
        span = s[i:] - s[i]
        close = np.abs(ys - y[i]) <= M
        if close.any():
            end_len = max(end_len, float(span[np.nonzero(close)[0][-1]]))
        rng_ = np.maximum.accumulate(ys) - np.minimum.accumulate(ys)
        inside = np.nonzero(rng_ <= M)[0]
        pair_len = max(pair_len, float(span[inside[-1]]))
    return end_len, pair_len


def verify_curve_separation(f: NilDiffeo, M: float | tuple = (1.0, 2.0, 4.0), curves: int = 100,
                            step: float = 0.05, rng=None) -> CheckReport:
    """Smallest length beyond which every unstable arc has pi_u-separated endpoints
    (and a pi_u-separated pair), for each M; plus the linear gap-vs-length fit."""
    rng = np.random.default_rng(rng)
    Ms = sorted(float(m) for m in np.atleast_1d(M))
    top = Ms[-1]
    base = f.sample_fundamental(curves, rng)
    lengths = np.linspace(3.0 * top + 2.0, 6.0 * top + 4.0, curves)
    ell_end = {m: 0.0 for m in Ms}
    ell_pair = {m: 0.0 for m in Ms}
    xs, ys = [], []
    for p0, L in zip(base, lengths):
        curve = grow_unstable_curve(f, p0, float(L), step)
        for m in Ms:
            e, pr = window_lengths(curve, m)
            if e >= curve.length - step:
                ell_end[m] = math.inf  # never separated on this arc
            ell_end[m] = max(ell_end[m], e)
            ell_pair[m] = max(ell_pair[m], pr)
        s = curve.arclength
        y = group.proj_u(curve.points)
        xs.append(s - s[0])
        ys.append(np.abs(y - y[0]))
    slope, intercept = np.polyfit(np.concatenate(xs), np.concatenate(ys), 1)
    ends = [ell_end[m] for m in Ms]
    pairs_ = [ell_pair[m] for m in Ms]
    finite = all(math.isfinite(v) for v in ends)
    monotone = all(a <= b + 1e-12 for a, b in zip(ends, ends[1:]))
    stronger = all(pr <= e + 1e-12 for pr, e in zip(pairs_, ends))
    passed = finite and monotone and stronger and slope > 0
    udiam = verify_udiam(f, rng=rng)
    margin = float(min(lengths[0] - max(ends), slope))
    return CheckReport("curve-separation", bool(passed and udiam.passed),
                       {"M": Ms, "ell_endpoints": ends, "ell_pair": pairs_, "qi_slope": float(slope),
                        "qi_intercept": float(intercept), "udiam_C": udiam.constants["C"]},
                       margin, curves, {"monotone_in_M": monotone, "udiam_pass": udiam.passed})


def verify_udiam(f: NilDiffeo, alpha: float | None = None, n_max: int = 12, length: float = 0.1,
                 count: int = 20, rng=None) -> CheckReport:
    """diam f^n(J) >= C alpha^n for short unstable arcs J; C fitted as the worst ratio."""
    rng = np.random.default_rng(rng)
    lam = f.lam
    alpha = 0.9 * lam if alpha is None else alpha
    C = math.inf
    for p0 in f.sample_fundamental(count, rng):
        pts = grow_unstable_curve(f, p0, length, length / 4).points[[0, -1]]
        for n in range(n_max + 1):
            diam = float(np.linalg.norm(pts[1] - pts[0]))
            C = min(C, diam / alpha ** n)
            pts = f(pts)
    return CheckReport("udiam", bool(C > 0), {"C": C, "alpha": alpha, "n_max": n_max}, C, count)


# -- tube volume ---------------------------------------------------------------------

def ball_union_volume(centers, radius: float, samples: int = 100_000, rng=None) -> float:
    """Monte Carlo volume of a union of equal Euclidean balls.

    Draw a ball uniformly, then a uniform point in it; with m(x) the number of balls
    covering x, vol = N V_ball E[1/m]. Unbiased and needs no bounding box.
    """
    rng = np.random.default_rng(rng)
    centers = np.asarray(centers, dtype=float)
    v_ball = 4.0 / 3.0 * math.pi * radius ** 3
    idx = rng.integers(0, len(centers), samples)
    d = rng.normal(size=(samples, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    x = centers[idx] + d * radius * rng.random(samples)[:, None] ** (1.0 / 3.0)
    cover = cKDTree(centers).query_ball_point(x, radius, return_length=True)
    return float(len(centers) * v_ball * np.mean(1.0 / np.maximum(cover, 1)))


def capsule_volume(length: float, radius: float) -> float:
    return math.pi * radius ** 2 * length + 4.0 / 3.0 * math.pi * radius ** 3


def resample_euclidean(points, spacing: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], max(2, int(np.ceil(s[-1] / spacing)) + 1))
    return np.stack([np.interp(t, s, points[:, i]) for i in range(3)], axis=-1)


def tube_volumes(f: NilDiffeo, p0, length: float = 1.0, n_max: int = 6, radius: float = 0.5,
                 samples: int = 100_000, rng=None) -> np.ndarray:
    """Euclidean r-tube volumes around f^n(J), n = 0..n_max, J an unstable arc through p0."""
    rng = np.random.default_rng(rng)
    spacing = radius / 10.0
    J = grow_unstable_curve(f, p0, length, spacing / f.lam ** n_max).points
    vols = []
    pts = J
    for n in range(n_max + 1):
        centers = resample_euclidean(pts, spacing)
        vols.append(ball_union_volume(centers, radius, samples, rng))
        pts = f(pts)
    return np.array(vols)


def verify_volume_growth(f: NilDiffeo, mu: float | None = None, length: float = 1.0, n_max: int = 6,
                         n_fit: int = 2, radius: float = 0.5, samples: int = 100_000,
                         rng=None) -> CheckReport:
    """Fit log vol U(f^n J) ~ n log(rate) + log(C length J) and require rate >= 0.9 mu in log."""
    rng = np.random.default_rng(rng)
    lam = _require_diagonal(f)
    if mu is None:
        mu = estimate_constants(f, sample_count=50, n=10, rng=rng, horizon=20).mu
    p0 = f.sample_fundamental(1, rng)[0]
    vols = tube_volumes(f, p0, length, n_max, radius, samples, rng)
    ns = np.arange(n_fit, n_max + 1)
    slope, icept = np.polyfit(ns, np.log(vols[n_fit:]), 1)
    C = float(math.exp(icept) / length)
    # closed-form oracle: a straight segment of the same scale
    cyl = capsule_volume(10.0, radius)
    cyl_err = abs(ball_union_volume(resample_euclidean(np.array([[0.0, 0, 0], [0, 10.0, 0]]), radius / 10),
                                    radius, samples, rng) / cyl - 1.0)
    # slab comparability: Euclidean and frame norms differ by at most 1 + x0 inside |x| <= x0
    x0 = max(1.0, float(np.max(np.abs(group.proj_s(p0)))))
    target = 0.9 * math.log(mu)
    margin = float(slope - target)
    return CheckReport("volume-growth", bool(margin >= 0 and cyl_err < 0.02),
                       {"fitted_exponent": float(slope), "log_mu": math.log(mu), "mu": mu, "C": C,
                        "radius": radius, "comparability": 1.0 + x0, "cylinder_rel_error": cyl_err,
                        "volumes": [float(v) for v in vols], "lambda": lam},
                       margin, samples * (n_max + 2))


# -- center-stable plaques -------------------------------------------------------------

def cs_plaque(f: NilDiffeo, p0, radius: float, step: float = 0.1, center_step: float = 0.25,
              horizon: int = 15) -> np.ndarray:
    """Grid of points on the cs-plaque through p0: a stable arc of length 2 radius, then a
    center arc of length 2 radius through each of its points (batched RK4)."""
    stable = grow_stable_curve(f, p0, 2.0 * radius, step).points
    field = bundle_field(f, "c", horizon)
    nsteps = max(1, int(math.ceil(radius / center_step)))
    h = radius / nsteps
    ref0 = field(stable)
    rows = [stable]
    for sign in (1.0, -1.0):
        p, ref = stable, sign * ref0
        for _ in range(nsteps):
            p, k1, k4 = rk4_step(field, p, h, ref)
            ref = k4 * np.where(np.sum(k4 * k1, axis=-1, keepdims=True) < 0, -1.0, 1.0)
            rows.append(p)
    return np.concatenate(rows)


def verify_cs_bounded(f: NilDiffeo, radius_schedule=(1.0, 2.0, 4.0, 8.0), rng=None,
                      side_samples: int = 1000, horizon: int = 15) -> CheckReport:
    """R(L) = sup |pi_u q - pi_u p0| over cs-plaques of radius L must saturate; then
    points with pi_u gap > R + 0.1 must lie on the matching side of the plaque."""
    rng = np.random.default_rng(rng)
    _require_diagonal(f)
    p0 = f.sample_fundamental(1, rng)[0]
    R, plaque = [], None
    for L in radius_schedule:
        plaque = cs_plaque(f, p0, float(L), horizon=horizon)
        R.append(float(np.max(np.abs(plaque[:, 1] - p0[1]))))
    growth = (R[-1] - R[-2]) / R[-2] if R[-2] > 1e-12 else (0.0 if R[-1] <= 1e-12 else math.inf)
    saturated = growth < 0.02

    # side-of-surface test on the largest plaque, a graph y = Y(x, z)
    surface = LinearNDInterpolator(plaque[:, [0, 2]], plaque[:, 1])
    lo, hi = plaque[:, [0, 2]].min(axis=0), plaque[:, [0, 2]].max(axis=0)
    mid, half = 0.5 * (lo + hi), 0.25 * (hi - lo)
    xz = mid + half * rng.uniform(-1.0, 1.0, (side_samples, 2))
    side = rng.choice([-1.0, 1.0], side_samples)
    y = p0[1] + side * (R[-1] + 0.1 + 2.0 * rng.random(side_samples))
    Y = surface(xz)
    ok = np.isfinite(Y)
    agree = np.sign(y[ok] - Y[ok]) == side[ok]
    side_margin = float(np.min(side[ok] * (y[ok] - Y[ok]))) if ok.any() else -math.inf
    passed = saturated and bool(agree.all()) and ok.any()
    return CheckReport("cs-bounded", bool(passed),
                       {"radii": [float(L) for L in radius_schedule], "R": R, "last_growth": growth},
                       min(0.02 - growth, side_margin), int(ok.sum()),
                       {"side_test_points": int(ok.sum()), "side_disagreements": int((~agree).sum())})


# -- splitting and constants -------------------------------------------------------------

def verify_splitting(f: NilDiffeo, samples: int = 50, horizon: int = 40, rng=None,
                     residual_tol: float = 1e-6, angle_tol: float = 1e-3) -> CheckReport:
    rng = np.random.default_rng(rng)
    pts = f.sample_fundamental(samples, rng)
    res = invariance_residuals(f, pts, horizon)
    split = estimate_splitting(f, pts, horizon)
    worst_res = max(res.values())
    angle = split.min_angle
    return CheckReport("splitting", bool(worst_res < residual_tol and angle > angle_tol),
                       {"residuals": res, "min_angle": angle, "horizon": horizon},
                       float(min(residual_tol - worst_res, angle - angle_tol)), samples)


def verify_constants(f: NilDiffeo, samples: int = 200, n: int = 20, horizon: int = 40, rng=None,
                     margin_tol: float = 0.1) -> CheckReport:
    """Ordering of the PH constants, mu <= lam + 0.05, and log-rate domination margin."""
    c = estimate_constants(f, samples, n, rng=rng, horizon=horizon)
    lam = f.lam
    passed = c.ok and c.mu <= lam + 0.05 and c.margin > margin_tol
    out = c.to_json()
    out["lambda"] = lam
    return CheckReport("constants", bool(passed), out,
                       float(min(c.margin - margin_tol, lam + 0.05 - c.mu)), samples,
                       {"flag": c.flag} if c.flag else {})
