"""Semiconjugacy to the linear toral map, center leaves, global product structure, the
normalized center flow and the lattice-equivariant leaf conjugacy.

Everything here works in the original coordinates: the lift commutes with the
standard lattice Gamma_k and its algebraic part has an integer 2x2 block A.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, root

from . import group
from .curves import grow_unstable_curve, grow_stable_curve, rk4_step, bundle_field, _seed
from .dynamics import NilDiffeo, estimate_bundle, estimate_splitting
from .report import CheckReport


class GPSFailure(RuntimeError):
    pass


class GluingError(RuntimeError):
    pass


class FlowEventError(RuntimeError):
    pass


class SectionError(RuntimeError):
    pass


def _hyperbolic_block(f: NilDiffeo) -> np.ndarray:
    if f.conj is not None:
        raise ValueError("conjugacy tools expect the lift in original coordinates")
    return f.matrix.a2


def displacement(f: NilDiffeo, p) -> np.ndarray:
    """delta(p) = P f(p) - A P(p); lattice periodic, so it is evaluated on reduced points."""
    A = _hyperbolic_block(f)
    _, q = group.reduce(group.as_points(p), f.lattice)
    return group.proj_P(f(q)) - group.proj_P(q) @ A.T


def displacement_sup(f: NilDiffeo, count: int = 4096, rng=None) -> float:
    rng = np.random.default_rng(rng)
    return float(np.max(np.linalg.norm(displacement(f, f.sample_fundamental(count, rng)), axis=-1)))


@dataclass
class EigenData:
    """Eigen-split of a hyperbolic 2x2 matrix: right vectors e_*, dual left vectors l_*."""

    lam_s: float
    lam_u: float
    e_s: np.ndarray
    e_u: np.ndarray
    l_s: np.ndarray
    l_u: np.ndarray

    @classmethod
    def of(cls, A) -> "EigenData":
        A = np.asarray(A, dtype=float)
        w, V = np.linalg.eig(A)
        w, V = w.real, V.real
        order = np.argsort(np.abs(w))
        (ls, lu), V = w[order], V[:, order]
        if not (abs(ls) < 1.0 < abs(lu)):
            raise ValueError("matrix is not hyperbolic")
        L = np.linalg.inv(V)  # rows are dual left eigenvectors
        # orient so the unstable coordinate increases along +e_u with e_u[1] > 0
        for i in range(2):
            s = 1.0 if V[np.argmax(np.abs(V[:, i])), i] > 0 else -1.0
            V[:, i] *= s
            L[i] *= s
        return cls(float(ls), float(lu), V[:, 0], V[:, 1], L[0], L[1])

    def coords(self, v) -> np.ndarray:
        """(s, u) eigen-coordinates of plane vectors."""
        v = np.asarray(v, dtype=float)
        return np.stack([v @ self.l_s, v @ self.l_u], axis=-1)


@dataclass
class SemiConjugacy:
    """H = P + c with H f = A H and c bounded, from the truncated eigen-split series."""

    f: NilDiffeo
    A: np.ndarray
    eig: EigenData
    N: int
    delta_sup: tuple  # sup |delta_s|, sup |delta_u| with a safety factor
    tail_bound: float
    correction_bound: float

    def _orbit_deltas(self, p, n: int, forward: bool):
        step = self.f.apply if forward else self.f.apply_inverse
        _, q = group.reduce(p, self.f.lattice)
        out = []
        if forward:
            for _ in range(n):
                out.append(displacement(self.f, q))
                _, q = group.reduce(step(q), self.f.lattice)
        else:
            for _ in range(n):
                _, q = group.reduce(step(q), self.f.lattice)
                out.append(displacement(self.f, q))
        return out

    def correction(self, p, N: int | None = None) -> np.ndarray:
        N = self.N if N is None else N
        p = group.as_points(p)
        e = self.eig
        cu = np.zeros(p.shape[:-1])
        for n, d in enumerate(self._orbit_deltas(p, N, True)):
            cu += e.lam_u ** (-(n + 1)) * (d @ e.l_u)
        cs = np.zeros(p.shape[:-1])
        for n, d in enumerate(self._orbit_deltas(p, N, False), start=1):
            cs -= e.lam_s ** (n - 1) * (d @ e.l_s)
        return cs[..., None] * e.e_s + cu[..., None] * e.e_u

    def __call__(self, p, N: int | None = None) -> np.ndarray:
        p = group.as_points(p)
        return group.proj_P(p) + self.correction(p, N)

    def u_coord(self, p) -> np.ndarray:
        return self(p) @ self.eig.l_u

    def s_coord(self, p) -> np.ndarray:
        return self(p) @ self.eig.l_s

    def residual(self, p) -> np.ndarray:
        """|H f(p) - A H(p)| pointwise."""
        return np.linalg.norm(self(self.f(p)) - self(p) @ self.A.T, axis=-1)


def _tail(eig: EigenData, ds: float, du: float, N: int) -> float:
    ks = np.linalg.norm(eig.e_s)
    ku = np.linalg.norm(eig.e_u)
    lu, ls = abs(eig.lam_u), abs(eig.lam_s)
    return float(ku * du * lu ** (-N) / (lu - 1.0) + ks * ds * ls ** N / (1.0 - ls))


def semiconjugacy(f: NilDiffeo, N: int = 20, normalize: bool = True, samples: int = 4096,
                  rng=None, safety: float = 1.1) -> SemiConjugacy:
    """Build H; with normalize=True the lift is replaced by R_q^-1 f R_q where H(q) = 0,
    so that the returned evaluator satisfies H(0,0,0) = (0,0) and H f = A H exactly."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(rng)
    A = _hyperbolic_block(f)
    eig = EigenData.of(A)
    pts = f.sample_fundamental(samples, rng)
    d = displacement(f, pts)
    ds = safety * float(np.max(np.abs(d @ eig.l_s)))
    du = safety * float(np.max(np.abs(d @ eig.l_u)))
    tail = _tail(eig, ds, du, N)
    bound = float(np.linalg.norm(eig.e_u) * du / (abs(eig.lam_u) - 1.0)
                  + np.linalg.norm(eig.e_s) * ds / (1.0 - abs(eig.lam_s)))
    H = SemiConjugacy(f, A, eig, N, (ds, du), tail, bound)
    if normalize and (ds > 0 or du > 0):
        # the shifted lift has its own displacement, so its bounds are recomputed
        shifted = replace(f, shift=tuple(float(v) for v in _zero_of(H)))
        return semiconjugacy(shifted, N, normalize=False, samples=samples, rng=rng, safety=safety)
    return H


def _zero_of(H: SemiConjugacy) -> np.ndarray:
    """Shift q = (x, y, 0) such that the truncated H of R_q^-1 f R_q vanishes at 0.

    Solving on the shifted lift itself (rather than H(q) = 0 for the unshifted one)
    makes the normalization exact at every truncation order, not just up to the tail.
    """
    origin = np.zeros(3)

    def fun(xy):
        shifted = replace(H, f=replace(H.f, shift=(float(xy[0]), float(xy[1]), 0.0)))
        return shifted(origin)

    sol = root(fun, -H.correction(origin), method="hybr", options={"xtol": 1e-13})
    # hybr may report lack of progress once at rounding level; judge by the residual
    if np.max(np.abs(fun(sol.x))) > 1e-12:
        raise SectionError(f"could not normalize H(0) = 0: {sol.message}")
    return np.array([sol.x[0], sol.x[1], 0.0])


# -- center leaves ---------------------------------------------------------------------------

def leaf_tolerance(H: SemiConjugacy) -> float:
    return 2.0 * H.tail_bound + 1e-6


def center_leaf_test(H: SemiConjugacy, p, q) -> np.ndarray:
    """True where p and q lie on one center leaf, judged by their H images."""
    d = np.linalg.norm(H(p) - H(q), axis=-1)
    return d < leaf_tolerance(H)


def probe_bound(H: SemiConjugacy) -> float:
    return 2.0 * H.correction_bound + 1.0


def orbit_probe(H: SemiConjugacy, p, q, horizon: int = 30) -> tuple:
    """sup over |n| <= horizon of |P f^n p - P f^n q|, and whether it stays below the bound.

    Both orbits are pulled back by the lattice element that reduces the p-orbit; P
    differences are invariant under a common left translation, so precision is kept.
    """
    f = H.f
    p, q = np.broadcast_arrays(group.as_points(p), group.as_points(q))
    bound = probe_bound(H)
    sup = np.linalg.norm(group.proj_P(p) - group.proj_P(q), axis=-1)
    first_exit = np.full(sup.shape, -1)
    for step in (f.apply, f.apply_inverse):
        a, b = p.copy(), q.copy()
        for n in range(1, horizon + 1):
            a, b = step(a), step(b)
            gamma, a = group.reduce(a, f.lattice)
            b = group.mul(group.inv(gamma), b)
            gap = np.linalg.norm(group.proj_P(a) - group.proj_P(b), axis=-1)
            first_exit = np.where((first_exit < 0) & (gap >= bound), n, first_exit)
            sup = np.maximum(sup, gap)
            # once separated, keep the far point from overflowing the floating range
            b = np.where((gap >= bound)[..., None], a + (b - a) / np.maximum(gap, 1.0)[..., None] * bound * 2, b)
    return sup, sup < bound, first_exit


# -- unstable and stable leaves by seed pushing ------------------------------------------------

@dataclass
class LeafParam:
    """s -> F^m(q0 exp(s e)) with q0 = F^-m(q): a smooth parameterization of W^u(q)
    (F = f) or W^s(q) (F = f^-1) whose scale is roughly lam^-m per unit length."""

    f: NilDiffeo
    q: np.ndarray
    bundle: str = "u"
    iterations: int = 8
    horizon: int = 20

    def __post_init__(self):
        f = self.f
        self._fwd, back = (f.apply, f.apply_inverse) if self.bundle == "u" else (f.apply_inverse, f.apply)
        q0 = np.asarray(self.q, dtype=float).reshape(3)
        for _ in range(self.iterations):
            q0 = back(q0)
        self.q0 = q0
        self.e = estimate_bundle(f, q0, self.horizon, self.bundle)
        self.scale = f.lam ** -self.iterations

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        pts = _seed(self.q0, self.e, np.atleast_1d(s) * self.scale)
        for _ in range(self.iterations):
            pts = self._fwd(pts)
        return pts.reshape(s.shape + (3,))


def _bracket_root(fun, grid_half: float, max_half: float, count: int = 129):
    """Grow a symmetric grid until fun changes sign; return (grid, values, bracket index)."""
    half = grid_half
    while half <= max_half:
        s = np.linspace(-half, half, count)
        v = fun(s)
        sign = np.nonzero(np.diff(np.sign(v)) != 0)[0]
        if len(sign):
            return s, v, int(sign[0])
        half *= 2.0
    raise GPSFailure(f"root not bracketed within growth length {max_half:g}")


def gps_intersect(H: SemiConjugacy, p, q, max_length: float = 200.0, iterations: int = 8,
                  return_info: bool = False):
    """The point of W^u(q) lying on W^cs(p), i.e. where the u-coordinate of H equals that of H(p)."""
    p = np.asarray(p, dtype=float).reshape(3)
    leaf = LeafParam(H.f, np.asarray(q, dtype=float).reshape(3), "u", iterations)
    target = float(H.u_coord(p))

    def g(s):
        return H.u_coord(leaf(s)) - target

    s, v, i = _bracket_root(g, 2.0, max_length)
    dv = np.diff(v)
    if not (np.all(dv > 0) or np.all(dv < 0)):
        raise GPSFailure("GPS check failed: u-coordinate of H not monotone along the unstable leaf")
    root_s = brentq(lambda t: float(g(np.array(t))), s[i], s[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps,
                    maxiter=200)
    r = leaf(np.array(root_s))
    if return_info:
        return r, {"residual": abs(float(g(np.array(root_s)))), "param": root_s}
    return r


def u_monotone(H: SemiConjugacy, curve_points) -> tuple:
    """Whether the u-coordinate of H is strictly monotone along a polyline, and the worst step."""
    d = np.diff(H.u_coord(curve_points))
    sign = 1.0 if d.sum() >= 0 else -1.0
    return bool(np.all(sign * d > 0)), float(np.min(sign * d))


# -- normalized center flow --------------------------------------------------------------------

@dataclass
class CenterFlow:
    """phi_t along the center leaves, rescaled so that phi_1(p) = (0,0,1) p.

    ell(p), the center-leaf length from p to (0,0,1) p, is found by integrating the unit
    center field with z as parameter; flow times are arclengths divided by ell.
    """

    f: NilDiffeo
    horizon: int = 20
    z_steps: int = 8
    arc_step: float = 0.1
    match_tol: float = 1e-8

    def field(self, p) -> np.ndarray:
        """Unit (frame norm) center field in ambient coordinates, pointing up in z."""
        v = group.frame_to_ambient(p, estimate_bundle(self.f, p, self.horizon, "c"))
        return v * np.where(v[..., 2:3] < 0, -1.0, 1.0)

    def _z_rhs(self, y):
        p = y[..., :3]
        v = self.field(p)
        return np.concatenate([v / v[..., 2:3], 1.0 / v[..., 2:3]], axis=-1)

    def integrate_to_height(self, p, z_target):
        """Follow the leaf from p to height z_target; returns (end point, signed arclength)."""
        p = group.as_points(p)
        dz = np.broadcast_to(np.asarray(z_target, dtype=float) - p[..., 2], p.shape[:-1])
        n = max(1, int(math.ceil(float(np.max(np.abs(dz))) * self.z_steps)))
        h = (dz / n)[..., None]
        y = np.concatenate([p, np.zeros(p.shape[:-1] + (1,))], axis=-1)
        for _ in range(n):
            k1 = self._z_rhs(y)
            k2 = self._z_rhs(y + 0.5 * h * k1)
            k3 = self._z_rhs(y + 0.5 * h * k2)
            k4 = self._z_rhs(y + h * k3)
            y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return y[..., :3], y[..., 3]

    def ell(self, p, return_residual: bool = False):
        p = group.as_points(p)
        end, s = self.integrate_to_height(p, p[..., 2] + 1.0)
        resid = np.max(np.abs(end - (p + np.array([0.0, 0.0, 1.0]))), axis=-1)
        if np.any(resid > self.match_tol):
            raise FlowEventError(f"center leaf did not return to (0,0,1) p: mismatch {np.max(resid):.3g}")
        return (s, resid) if return_residual else s

    def _arc(self, p, length):
        """Move an arclength `length` (>= 0, per point) along the upward center field."""
        n = max(1, int(math.ceil(float(np.max(length)) / self.arc_step)))
        h = (np.asarray(length, dtype=float) / n)
        h = np.broadcast_to(h, p.shape[:-1])
        for _ in range(n):
            p, _, _ = rk4_step(self.field, p, h)
        return p

    def __call__(self, p, t, ell=None) -> np.ndarray:
        """phi_t(p); integer parts of t are exact central translations. ``ell`` may carry
        precomputed leaf lengths at p."""
        p = group.as_points(p)
        shape = p.shape[:-1]
        flat = p.reshape(-1, 3)
        t = np.broadcast_to(np.asarray(t, dtype=float), shape).reshape(-1)
        whole = np.floor(t)
        frac = t - whole
        q = flat.copy()
        moving = frac > 0
        if np.any(moving):
            lengths = self.ell(flat[moving]) if ell is None else np.broadcast_to(ell, shape).reshape(-1)[moving]
            q[moving] = self._arc(flat[moving], frac[moving] * lengths)
        q[:, 2] += whole
        return q.reshape(shape + (3,))

    def time_between(self, p, q, ell=None) -> np.ndarray:
        """t with phi_t(p) = q for points on one center leaf."""
        p, q = np.broadcast_arrays(group.as_points(p), group.as_points(q))
        end, s = self.integrate_to_height(p, q[..., 2])
        resid = np.max(np.abs(end[..., :2] - q[..., :2]), axis=-1)
        if np.any(resid > 1e-6):
            raise FlowEventError(f"points are not on one center leaf: mismatch {np.max(resid):.3g}")
        return s / (self.ell(p) if ell is None else ell)


def center_flow(f: NilDiffeo, **kw) -> CenterFlow:
    return CenterFlow(f, **kw)


# -- section of H -------------------------------------------------------------------------

def section_fiber(H: SemiConjugacy, v, z0: float = 0.0, tol: float = 1e-12,
                  max_iter: int = 40) -> np.ndarray:
    """sigma(v): the point (a, b, z0) with H(a, b, z0) = v, by batched secant-Newton.

    H is only Holder, and the truncated series has huge higher derivatives, so a fixed
    finite-difference step gives poor slopes. The step instead tracks the current
    residual, which measures the slope at the scale of the remaining error.
    """
    v = np.asarray(v, dtype=float)
    shape = v.shape[:-1]
    target = v.reshape(-1, 2)
    ab = target.copy()

    def Hab(ab):
        return H(np.concatenate([ab, np.full((len(ab), 1), z0)], axis=-1))

    r = Hab(ab) - target
    active = np.max(np.abs(r), axis=-1) > tol
    for _ in range(max_iter):
        if not active.any():
            break
        a, ra = ab[active], r[active]
        fd = np.clip(np.linalg.norm(ra, axis=-1), 1e-11, 1e-2)[:, None]
        base = ra + target[active]
        J = np.stack([(Hab(a + fd * e) - base) / fd for e in np.eye(2)], axis=-1)
        a = a - np.linalg.solve(J, ra[..., None])[..., 0]
        ab[active] = a
        r[active] = Hab(a) - target[active]
        active = np.max(np.abs(r), axis=-1) > tol
    else:
        raise SectionError(f"section solve did not converge: residual {np.max(np.abs(r)):.3g}")
    out = np.concatenate([ab, np.full((len(ab), 1), z0)], axis=-1)
    return out.reshape(shape + (3,))


def section_ladder(H: SemiConjugacy, v, p0=(0.0, 0.0, 0.0), max_length: float = 50.0) -> np.ndarray:
    """sigma(v) by the ladder: x in W^u(p0) with u-coordinate of H equal to that of v,
    then y in W^s(x) with matching s-coordinate. One point at a time."""
    v = np.asarray(v, dtype=float).reshape(2)
    vu, vs = float(v @ H.eig.l_u), float(v @ H.eig.l_s)
    pts = []
    for leaf, coord, target in ((LeafParam(H.f, np.asarray(p0, dtype=float), "u"), H.u_coord, vu), (None, H.s_coord, vs)):
        if leaf is None:
            leaf = LeafParam(H.f, pts[-1], "s")

        def g(s, leaf=leaf, coord=coord, target=target):
            return coord(leaf(s)) - target

        try:
            s, vals, i = _bracket_root(g, 2.0, max_length)
        except GPSFailure as exc:
            raise SectionError(f"ladder root not bracketed for v = {v.tolist()}: {exc}") from None
        t = brentq(lambda t: float(g(np.array(t))), s[i], s[i + 1], xtol=1e-15,
                   rtol=4 * np.finfo(float).eps, maxiter=200)
        pts.append(leaf(np.array(t)))
    return pts[-1]


def section_sigma(H: SemiConjugacy, v, method: str = "fiber", z0: float = 0.0) -> np.ndarray:
    if method == "fiber":
        return section_fiber(H, v, z0)
    if method == "ladder":
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return section_ladder(H, v)
        return np.array([section_ladder(H, w) for w in v.reshape(-1, 2)]).reshape(v.shape[:-1] + (3,))
    raise ValueError(f"unknown section method {method!r}")


# -- leaf conjugacy -------------------------------------------------------------------------

_E1 = np.array([1.0, 0.0, 0.0])
_E2 = np.array([0.0, 1.0, 0.0])


@dataclass
class LeafConjugacy:
    """h(x, y, z) = phi_{rho(x,y) + z}(sigma(x, y)) on the unit square, extended by
    h((a,b,0) s) = (a,b,0) h(s). Edge values of rho come from transporting the
    opposite edge by (1,0,0) and (0,1,0); the interior is a Coons blend."""

    H: SemiConjugacy
    flow: CenterFlow
    corners: dict = field(default_factory=dict)
    corner_residual: float = 0.0

    def sigma(self, xy) -> np.ndarray:
        return section_fiber(self.H, xy)

    # rho on the edges of S
    def bottom(self, x):
        c = self.corners
        return (1 - x) * c["00"] + x * c["10"]

    def left(self, y):
        c = self.corners
        return (1 - y) * c["00"] + y * c["01"]

    def top(self, x):
        x = np.asarray(x, dtype=float)
        zeros, ones = np.zeros_like(x), np.ones_like(x)
        lower = group.mul(_E2, self.sigma(np.stack([x, zeros], axis=-1)))
        upper = self.sigma(np.stack([x, ones], axis=-1))
        return self.bottom(x) + self.flow.time_between(upper, lower)

    def right(self, y):
        y = np.asarray(y, dtype=float)
        zeros, ones = np.zeros_like(y), np.ones_like(y)
        shifted = group.mul(_E1, self.sigma(np.stack([zeros, y], axis=-1)))
        here = self.sigma(np.stack([ones, y], axis=-1))
        return self.left(y) - y + self.flow.time_between(here, shifted)

    def rho(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        c = self.corners
        bilinear = ((1 - x) * (1 - y) * c["00"] + x * (1 - y) * c["10"]
                    + (1 - x) * y * c["01"] + x * y * c["11"])
        return ((1 - y) * self.bottom(x) + y * self.top(x) + (1 - x) * self.left(y)
                + x * self.right(y) - bilinear)

    def on_square(self, p) -> np.ndarray:
        """h on [0,1]^2 x R, with every section solve and leaf length done in one batch."""
        p = group.as_points(p)
        shape = p.shape[:-1]
        flat = p.reshape(-1, 3)
        n = len(flat)
        x, y, z = flat[:, 0], flat[:, 1], flat[:, 2]
        zeros, ones = np.zeros(n), np.ones(n)
        req = np.concatenate([flat[:, :2], np.stack([x, zeros], -1), np.stack([x, ones], -1),
                              np.stack([zeros, y], -1), np.stack([ones, y], -1)])
        s, sx0, sx1, s0y, s1y = np.split(self.sigma(req), 5)
        starts = np.concatenate([sx1, s1y, s])
        ells = self.flow.ell(starts)
        targets = np.concatenate([group.mul(_E2, sx0), group.mul(_E1, s0y)])
        tau = self.flow.time_between(starts[:2 * n], targets, ell=ells[:2 * n])
        top = self.bottom(x) + tau[:n]
        right = self.left(y) - y + tau[n:]
        c = self.corners
        bilinear = ((1 - x) * (1 - y) * c["00"] + x * (1 - y) * c["10"]
                    + (1 - x) * y * c["01"] + x * y * c["11"])
        rho = (1 - y) * self.bottom(x) + y * top + (1 - x) * self.left(y) + x * right - bilinear
        return self.flow(s, rho + z, ell=ells[2 * n:]).reshape(shape + (3,))

    def __call__(self, p) -> np.ndarray:
        p = group.as_points(p)
        a, b = np.floor(p[..., 0]), np.floor(p[..., 1])
        xs, ys = p[..., 0] - a, p[..., 1] - b
        base = np.stack([a, b, np.zeros_like(a)], axis=-1)
        local = np.stack([xs, ys, p[..., 2] - a * ys], axis=-1)
        return group.mul(base, self.on_square(local))


def build_leaf_conjugacy(H: SemiConjugacy, flow: CenterFlow | None = None, gluing_tol: float = 1e-6) -> LeafConjugacy:
    flow = flow or CenterFlow(H.f)
    h = LeafConjugacy(H, flow)
    origin = np.zeros(3)
    s00 = h.sigma(np.zeros(2))
    # corner normalization: phi_r(sigma(0,0)) = (0,0,0)
    c00 = float(flow.time_between(s00, origin))
    h.corners = {"00": c00}
    s10, s01 = h.sigma(np.array([1.0, 0.0])), h.sigma(np.array([0.0, 1.0]))
    h.corners["10"] = c00 + float(flow.time_between(s10, group.mul(_E1, s00)))
    h.corners["01"] = c00 + float(flow.time_between(s01, group.mul(_E2, s00)))
    s11 = h.sigma(np.array([1.0, 1.0]))
    via_top = h.corners["10"] + float(flow.time_between(s11, group.mul(_E2, s10)))
    via_right = h.corners["01"] - 1.0 + float(flow.time_between(s11, group.mul(_E1, s01)))
    h.corners["11"] = via_top
    h.corner_residual = abs(via_top - via_right)
    if h.corner_residual > gluing_tol:
        raise GluingError(f"boundary gluing failed: corner mismatch {h.corner_residual:.3g}")
    return h


def seam_residuals(h: LeafConjugacy, y, z) -> dict:
    """Both decompositions of points on the square's edges must give the same image."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    ones, zeros = np.ones_like(y), np.zeros_like(y)
    # (1, y, z) = (1,0,0) (0, y, z - y) and (x, 1, z) = (0,1,0) (x, 0, z)
    out = h.on_square(np.concatenate([np.stack([ones, y, z], axis=-1), np.stack([zeros, y, z - y], axis=-1),
                                      np.stack([y, ones, z], axis=-1), np.stack([y, zeros, z], axis=-1)]))
    right, left, top, bottom = np.split(out, 4)
    left, bottom = group.mul(_E1, left), group.mul(_E2, bottom)
    return {"x_seam": float(np.max(np.abs(right - left))), "y_seam": float(np.max(np.abs(top - bottom)))}


def equivariance_residuals(h: LeafConjugacy, p) -> dict:
    k = h.H.f.lattice.k
    p = group.as_points(p).reshape(-1, 3)
    gens = (("(1,0,0)", _E1), ("(0,1,0)", _E2), (f"(0,0,1/{k})", np.array([0.0, 0.0, 1.0 / k])))
    images = np.split(h(np.concatenate([p] + [group.mul(g, p) for _, g in gens])), len(gens) + 1)
    return {name: float(np.max(np.abs(img - group.mul(g, images[0]))))
            for (name, g), img in zip(gens, images[1:])}


def verify_leaf_conjugacy(h: LeafConjugacy, leaves: int = 100, points_per_leaf: int = 5,
                          rng=None) -> CheckReport:
    """h g and f h send each vertical leaf of g into one center leaf of f, and h
    parameterizes the fibers of H over the plane."""
    rng = np.random.default_rng(rng)
    H, f = h.H, h.H.f
    g = f.algebraic_part
    xy = rng.uniform(-1.0, 2.0, (leaves, 2))
    z = rng.uniform(-1.0, 1.0, (leaves, points_per_leaf))
    P = np.concatenate([np.repeat(xy, points_per_leaf, axis=0), z.reshape(-1, 1)], axis=1)
    hP, hgP = np.split(h(np.concatenate([P, g(P)])), 2)
    lhs, rhs = hgP, f(hP)
    same = center_leaf_test(H, lhs, rhs)
    fiber_err = float(np.max(np.abs(H(hP) - P[:, :2])))
    tol = leaf_tolerance(H)
    return CheckReport("leaf-conjugacy", bool(same.all() and fiber_err < tol),
                       {"same_leaf": int(same.sum()), "fiber_error": fiber_err, "tolerance": tol,
                        "max_hg_minus_fh": float(np.max(np.abs(lhs - rhs)))},
                       float(tol - fiber_err), len(P))


def semiconjugacy_report(H: SemiConjugacy, samples: int = 1000, rng=None) -> CheckReport:
    rng = np.random.default_rng(rng)
    f = H.f
    pts = f.sample_fundamental(samples, rng)
    resid = float(np.max(H.residual(pts)))
    H2 = replace(H, N=2 * H.N)
    change = float(np.max(np.abs(H(pts) - H2(pts))))
    gammas = np.concatenate([np.eye(3) * [1.0, 1.0, 1.0 / f.lattice.k],
                             np.c_[rng.integers(-3, 4, (5, 2)), rng.integers(-6, 7, (5, 1)) / f.lattice.k]])
    equiv = max(float(np.max(np.abs(H(group.mul(g, pts[:200])) - H(pts[:200]) - g[:2])))
                for g in gammas)
    h0 = float(np.max(np.abs(H(np.zeros(3)))))
    passed = resid <= 2 * H.tail_bound + 1e-12 and change <= H.tail_bound + 1e-12 and equiv < 1e-10 and h0 < 1e-10
    return CheckReport("semiconjugacy", bool(passed),
                       {"N": H.N, "tail_bound": H.tail_bound, "residual": resid, "doubling_change": change,
                        "equivariance": equiv, "H_origin": h0, "shift": list(f.shift or (0.0, 0.0, 0.0))},
                       float(2 * H.tail_bound - resid), samples)


def fiber_dichotomy(H: SemiConjugacy, flow: CenterFlow, pairs: int = 1000, horizon: int = 30,
                    rng=None) -> CheckReport:
    """Half the pairs share a center leaf (flow images), half are random; the H test and
    the orbit probe must agree on every pair. Also checks (0,0,1/k) translates."""
    rng = np.random.default_rng(rng)
    f = H.f
    half = pairs // 2
    p = f.sample_fundamental(pairs, rng)
    q = np.concatenate([flow(p[:half], rng.uniform(-2.0, 2.0, half)),
                        f.sample_fundamental(pairs - half, rng) + rng.integers(-2, 3, (pairs - half, 3))])
    by_h = center_leaf_test(H, p, q)
    _, by_orbit, _ = orbit_probe(H, p, q, horizon)
    disagree = int(np.sum(by_h != by_orbit))
    translate = group.mul(np.array([0.0, 0.0, 1.0 / f.lattice.k]), p)
    cmpt = center_leaf_test(H, p, translate) & orbit_probe(H, p, translate, horizon)[1]
    return CheckReport("center-lemma", bool(disagree == 0 and cmpt.all()),
                       {"pairs": pairs, "same_leaf_by_H": int(by_h.sum()), "disagreements": disagree,
                        "translate_pass": int(cmpt.sum()), "probe_bound": probe_bound(H)},
                       float(-disagree), pairs)


def gps_report(H: SemiConjugacy, curves: int = 100, intersections: int = 10, length: float = 6.0,
               rng=None) -> CheckReport:
    rng = np.random.default_rng(rng)
    f = H.f
    worst = math.inf
    monotone = True
    for p0 in f.sample_fundamental(curves, rng):
        ok, step = u_monotone(H, grow_unstable_curve(f, p0, length, 0.05).points)
        monotone &= ok
        worst = min(worst, step)
    spread, resid = 0.0, 0.0
    ps, qs = f.sample_fundamental(intersections, rng), f.sample_fundamental(intersections, rng)
    qs = qs + np.c_[rng.integers(-2, 3, (intersections, 2)), np.zeros(intersections)]
    for p, q in zip(ps, qs):
        r, info = gps_intersect(H, p, q, return_info=True)
        other = LeafParam(f, q, "u")(np.array(rng.uniform(0.3, 1.5) * rng.choice([-1.0, 1.0])))
        r2, info2 = gps_intersect(H, p, other, return_info=True)
        spread = max(spread, float(np.max(np.abs(r - r2))))
        resid = max(resid, info["residual"], info2["residual"])
    return CheckReport("gps", bool(monotone and spread < 1e-6 and resid < 1e-8),
                       {"curves": curves, "min_u_step": worst, "reseed_spread": spread, "root_residual": resid},
                       float(1e-6 - spread), curves + intersections)


def leaf_conjugacy_report(H: SemiConjugacy, samples: int = 100, leaves: int = 100, rng=None,
                          flow: CenterFlow | None = None) -> tuple:
    """Build h and run every leaf-conjugacy check; returns (report, h)."""
    rng = np.random.default_rng(rng)
    flow = flow or CenterFlow(H.f)
    f = H.f
    pts = f.sample_fundamental(samples, rng)
    phi1 = float(np.max(np.abs(flow(flow(pts, 0.7), 0.3) - group.mul(np.array([0.0, 0.0, 1.0]), pts))))
    h = build_leaf_conjugacy(H, flow)
    seam = seam_residuals(h, rng.random(samples // 4), rng.uniform(-1.0, 1.0, samples // 4))
    p = rng.uniform(-2.0, 2.0, (samples, 3))
    equiv = equivariance_residuals(h, p)
    leafs = verify_leaf_conjugacy(h, leaves, 5, rng)
    identity = float(np.max(np.abs(h(p) - p)))
    worst = max([phi1, h.corner_residual] + list(seam.values()) + list(equiv.values()))
    passed = worst < 1e-6 and leafs.passed
    consts = {"phi1_residual": phi1, "corner_residual": h.corner_residual, "seams": seam,
              "equivariance": equiv, "corners": dict(h.corners), "max_displacement": identity}
    consts.update(leafs.constants)
    return CheckReport("leaf-conjugacy", bool(passed), consts, float(1e-6 - worst),
                       samples + leafs.samples), h


def grid_csv(fn, n: int = 11, z: float = 0.0) -> str:
    """Evaluate fn on an n x n grid of the unit square at height z; CSV with the fixed header."""
    t = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(t, t, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], axis=-1)
    out = np.asarray(fn(pts))
    if out.shape[-1] == 2:
        out = np.concatenate([out, np.zeros((len(out), 1))], axis=-1)
    rows = ["x_in,y_in,z_in,x_out,y_out,z_out"]
    rows += [",".join(format(v, ".17g") for v in (*a, *b)) for a, b in zip(pts, out)]
    return "\n".join(rows) + "\n"
