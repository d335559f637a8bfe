"""Diffeomorphisms of H commuting with a lattice, their derivative cocycle in the
left-invariant frame, and numerical estimates of the invariant splitting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import group
from .automorphisms import (GMatrix, HAutomorphism, conjugate_to_diagonal, from_derivative,
                            is_partially_hyperbolic)
from .group import Lattice

TWO_PI = 2.0 * math.pi
_COMPONENTS = {"X": 0, "Y": 1, "Z": 2}


class ConvergenceError(RuntimeError):
    pass


class DegenerateSplitting(RuntimeError):
    pass


@dataclass(frozen=True)
class Term:
    component: str
    m: int
    n: int
    kind: str
    amplitude: float

    def __post_init__(self):
        if self.component not in _COMPONENTS:
            raise ValueError(f"component must be X, Y or Z, got {self.component!r}")
        if self.kind not in ("cos", "sin"):
            raise ValueError(f"kind must be cos or sin, got {self.kind!r}")

    def to_json(self) -> dict:
        return {"component": self.component, "m": self.m, "n": self.n,
                "kind": self.kind, "amplitude": self.amplitude}


@dataclass(frozen=True)
class Perturbation:
    """psi(p) = p * exp(w(x, y)), w a trigonometric polynomial on R^2 / Z^2 with
    values in the Lie algebra (frame components X, Y, Z)."""

    terms: tuple = ()

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(**t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        if self.lipschitz_bound >= 0.5:
            raise ValueError(f"perturbation too large: margin {self.lipschitz_bound:.4f} >= 0.5")

    @property
    def lipschitz_bound(self) -> float:
        return TWO_PI * sum(abs(t.amplitude) * max(abs(t.m), abs(t.n)) for t in self.terms)

    @property
    def is_zero(self) -> bool:
        return all(t.amplitude == 0 for t in self.terms)

    def field(self, xy) -> tuple:
        """Return w and its (x, y) gradient: shapes (..., 3) and (..., 3, 2)."""
        xy = np.asarray(xy, dtype=float)
        shape = xy.shape[:-1]
        w = np.zeros(shape + (3,))
        dw = np.zeros(shape + (3, 2))
        # reduce mod 1 first so huge coordinates keep their fractional precision
        x = xy[..., 0] - np.floor(xy[..., 0])
        y = xy[..., 1] - np.floor(xy[..., 1])
        for t in self.terms:
            if t.amplitude == 0:
                continue
            i = _COMPONENTS[t.component]
            phase = TWO_PI * (t.m * x + t.n * y)
            if t.kind == "cos":
                val, der = np.cos(phase), -np.sin(phase)
            else:
                val, der = np.sin(phase), np.cos(phase)
            w[..., i] += t.amplitude * val
            dw[..., i, 0] += t.amplitude * TWO_PI * t.m * der
            dw[..., i, 1] += t.amplitude * TWO_PI * t.n * der
        return w, dw

    def __call__(self, p) -> np.ndarray:
        p = group.as_points(p)
        if self.is_zero:
            return p.copy()
        w, _ = self.field(p[..., :2])
        return group.mul(p, group.exp_h(w))

    def jacobian(self, p) -> np.ndarray:
        p = group.as_points(p)
        jac = np.zeros(p.shape[:-1] + (3, 3))
        jac[..., 0, 0] = jac[..., 1, 1] = jac[..., 2, 2] = 1.0
        if self.is_zero:
            return jac
        w, dw = self.field(p[..., :2])
        x = p[..., 0]
        wx, wy = w[..., 0], w[..., 1]
        # psi = (x + wX, y + wY, z + wZ + wX wY / 2 + x wY)
        for j in range(2):
            jac[..., 0, j] += dw[..., 0, j]
            jac[..., 1, j] += dw[..., 1, j]
            jac[..., 2, j] = (dw[..., 2, j] + 0.5 * (dw[..., 0, j] * wy + wx * dw[..., 1, j])
                              + x * dw[..., 1, j])
        jac[..., 2, 0] += wy
        return jac

    def inverse(self, r, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
        """Solve psi(q) = r by the fixed-point iteration q_xy = r_xy - w_xy(q_xy)."""
        r = group.as_points(r)
        if self.is_zero:
            return r.copy()
        xy = r[..., :2].copy()
        scale = tol * np.maximum(1.0, np.abs(r[..., :2]))
        planar = Perturbation(tuple(t for t in self.terms if t.component != "Z"))
        for _ in range(max_iter):
            w, _ = planar.field(xy)
            new = r[..., :2] - w[..., :2]
            done = np.all(np.abs(new - xy) <= scale)
            xy = new
            if done:
                break
        else:
            raise ConvergenceError("inverse of the perturbation did not converge (perturbation too large)")
        w, _ = self.field(xy)
        return group.mul(r, group.exp_h(-w))

    def to_json(self) -> list:
        return [t.to_json() for t in self.terms]

    @classmethod
    def from_json(cls, data) -> "Perturbation":
        return cls(tuple(Term(str(d["component"]), int(d["m"]), int(d["n"]), str(d["kind"]),
                              float(d["amplitude"])) for d in data))


def _right_mul_jacobian(p, s) -> np.ndarray:
    """Jacobian of p -> p * s, which is (x + a, y + b, z + c + x b)."""
    p = group.as_points(p)
    jac = np.zeros(p.shape[:-1] + (3, 3))
    jac[..., 0, 0] = jac[..., 1, 1] = jac[..., 2, 2] = 1.0
    jac[..., 2, 0] = s[1]
    return jac


@dataclass(frozen=True)
class NilDiffeo:
    """Lift f = R_s^-1 o Psi o (Phi o psi)^power o Psi^-1 o R_s.

    Phi preserves the standard lattice, psi commutes with it, Psi (``conj``) is an
    optional algebraic conjugacy and R_s right multiplication by ``shift``. The
    lift commutes with the lattice Psi(Gamma_k) through the algebraic part
    Psi Phi^power Psi^-1.
    """

    auto: HAutomorphism
    pert: Perturbation = field(default_factory=Perturbation)
    lattice: Lattice = field(default_factory=Lattice)
    conj: HAutomorphism | None = None
    shift: tuple | None = None
    power: int = 1

    def __post_init__(self):
        ok, _ = is_partially_hyperbolic(self.auto.gmatrix)
        if not ok:
            raise ValueError("associated matrix is not partially hyperbolic")

    # -- evaluation ---------------------------------------------------------
    @cached_property
    def _auto_inv(self) -> HAutomorphism:
        return self.auto.inverse()

    @cached_property
    def _conj_inv(self) -> HAutomorphism | None:
        return None if self.conj is None else self.conj.inverse()

    @cached_property
    def _shift_inv(self):
        return None if self.shift is None else group.inv(np.asarray(self.shift, dtype=float))

    def apply(self, p) -> np.ndarray:
        q = group.as_points(p)
        if self.shift is not None:
            q = group.mul(q, self.shift)
        if self.conj is not None:
            q = self._conj_inv(q)
        for _ in range(self.power):
            q = self.auto(self.pert(q))
        if self.conj is not None:
            q = self.conj(q)
        if self.shift is not None:
            q = group.mul(q, self._shift_inv)
        return q

    __call__ = apply

    def apply_inverse(self, p) -> np.ndarray:
        q = group.as_points(p)
        if self.shift is not None:
            q = group.mul(q, self.shift)
        if self.conj is not None:
            q = self._conj_inv(q)
        ainv = self._auto_inv
        for _ in range(self.power):
            q = self.pert.inverse(ainv(q))
        if self.conj is not None:
            q = self.conj(q)
        if self.shift is not None:
            q = group.mul(q, self._shift_inv)
        return q

    def iterate(self, p, n: int) -> np.ndarray:
        q = group.as_points(p)
        step = self.apply if n >= 0 else self.apply_inverse
        for _ in range(abs(n)):
            q = step(q)
        return q

    def jacobian(self, p) -> np.ndarray:
        """Coordinate Jacobian of the lift at p (chain rule through every factor)."""
        return self.jacobian_and_image(p)[0]

    def jacobian_and_image(self, p):
        q = group.as_points(p)
        jac = np.broadcast_to(np.eye(3), q.shape[:-1] + (3, 3)).copy()
        if self.shift is not None:
            jac = _right_mul_jacobian(q, self.shift) @ jac
            q = group.mul(q, self.shift)
        if self.conj is not None:
            cinv = self._conj_inv
            jac = cinv.jacobian(q) @ jac
            q = cinv(q)
        for _ in range(self.power):
            jac = self.pert.jacobian(q) @ jac
            q = self.pert(q)
            jac = self.auto.jacobian(q) @ jac
            q = self.auto(q)
        if self.conj is not None:
            jac = self.conj.jacobian(q) @ jac
            q = self.conj(q)
        if self.shift is not None:
            jac = _right_mul_jacobian(q, self._shift_inv) @ jac
            q = group.mul(q, self._shift_inv)
        return jac, q

    def derivative_frame(self, p) -> np.ndarray:
        """Df(p) as a map from the frame at p to the frame at f(p)."""
        p = group.as_points(p)
        jac, image = self.jacobian_and_image(p)
        return group.frame_matrix_inv(image) @ jac @ group.frame_matrix(p)

    # -- algebraic data -----------------------------------------------------
    @property
    def algebraic_part(self) -> HAutomorphism:
        phi = self.auto
        for _ in range(self.power - 1):
            phi = phi.compose(self.auto)
        if self.conj is not None:
            phi = self.conj.compose(phi).compose(self.conj.inverse())
        return phi

    @property
    def matrix(self) -> GMatrix:
        return self.algebraic_part.gmatrix

    @property
    def eigenvalues(self) -> tuple:
        return is_partially_hyperbolic(self.matrix)[1]

    @property
    def lam(self) -> float:
        """The expanding eigenvalue of the associated matrix."""
        return abs(self.eigenvalues[1])

    def deck(self, gamma) -> np.ndarray:
        """Deck transformation corresponding to a standard lattice element."""
        gamma = group.as_points(gamma)
        return self.conj(gamma) if self.conj is not None else gamma

    def sample_fundamental(self, count: int, rng) -> np.ndarray:
        """Points covering a fundamental domain of this lift's lattice."""
        u = rng.random((count, 3))
        u[:, 2] /= self.lattice.k
        if self.shift is not None:
            u = group.mul(u, group.inv(self.shift))
        return self.conj(u) if self.conj is not None else u

    @cached_property
    def _frame_eigenvectors(self) -> np.ndarray:
        T = self.matrix.matrix
        l1, l2, l3 = self.eigenvalues
        vecs = []
        for lam in (l1, l2, l3):
            _, _, vh = np.linalg.svd(T - lam * np.eye(3))
            v = vh[-1]
            vecs.append(v if v[np.argmax(np.abs(v))] > 0 else -v)
        return np.array(vecs)

    def frame_eigenvectors(self) -> np.ndarray:
        """Rows: stable, unstable, center eigenvectors of the (frame-constant) algebraic matrix."""
        return self._frame_eigenvectors.copy()

    def to_json(self) -> dict:
        return {"lattice": self.lattice.to_json(), "matrix": self.auto.gmatrix.to_json(),
                "perturbation": self.pert.to_json()}


def make_system(matrix: GMatrix, pert: Perturbation | None = None, lattice: Lattice | None = None) -> NilDiffeo:
    from .automorphisms import preserves_lattice

    lattice = lattice or Lattice(1)
    auto = from_derivative(matrix)
    if not preserves_lattice(auto, lattice):
        raise ValueError(f"automorphism does not preserve Gamma_{lattice.k}")
    return NilDiffeo(auto, pert or Perturbation(), lattice)


def normal_form(f: NilDiffeo) -> NilDiffeo:
    """Algebraically conjugate f so that its associated matrix is diag(1/lam, lam, 1).

    Systems with a negative eigenvalue are squared first.
    """
    if f.conj is not None:
        raise ValueError("system is already conjugated")
    l1, l2, l3 = f.eigenvalues
    if l1 < 0 or l2 < 0 or l3 < 0:
        f = replace(f, power=2 * f.power)
    P, _ = conjugate_to_diagonal(f.matrix)
    return replace(f, conj=from_derivative(P))


# -- splitting -----------------------------------------------------------------

def _normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _cofactor(m):
    """Cofactor matrix det(M) M^-T: how M acts on plane normals."""
    return np.linalg.det(m)[..., None, None] * np.swapaxes(np.linalg.inv(m), -1, -2)


def _angle(u, v):
    """Angle between lines spanned by u and v (atan2 form stays accurate near 0)."""
    u, v = _normalize(u), _normalize(v)
    return np.arctan2(np.linalg.norm(np.cross(u, v), axis=-1), np.abs(np.sum(u * v, axis=-1)))


@dataclass
class FrameSplitting:
    eU: np.ndarray
    eC: np.ndarray
    eS: np.ndarray
    normal_cs: np.ndarray
    normal_cu: np.ndarray
    horizon: int

    @property
    def min_angle(self) -> float:
        angles = [_angle(self.eU, self.eC), _angle(self.eU, self.eS), _angle(self.eC, self.eS)]
        return float(np.min(np.minimum.reduce([np.atleast_1d(a) for a in angles])))


def _orbit(f: NilDiffeo, p, n: int, forward: bool):
    pts = [p]
    step = f.apply if forward else f.apply_inverse
    for _ in range(n):
        pts.append(step(pts[-1]))
    return pts


def _orient(e, ref):
    sign = np.sign(np.sum(e * ref, axis=-1, keepdims=True))
    return e * np.where(sign == 0, 1.0, sign)


def _unstable_side(f: NilDiffeo, p, n: int, refs):
    """Push a generic vector and a generic plane normal along f^-n(p), ..., p."""
    ref_s, ref_u, ref_c = refs
    shape = p.shape[:-1] + (3,)
    back = _orbit(f, p, n, forward=False)
    v = np.broadcast_to(_normalize(ref_u + 0.1 * (ref_s + ref_c)), shape).copy()
    nu = np.broadcast_to(_normalize(np.cross(ref_u, ref_c) + 0.1 * ref_s), shape).copy()
    for j in range(n, 0, -1):
        M = f.derivative_frame(back[j])
        v = _normalize(np.einsum("...ij,...j->...i", M, v))
        nu = _normalize(np.einsum("...ij,...j->...i", _cofactor(M), nu))
    return v, nu


def _stable_side(f: NilDiffeo, p, n: int, refs):
    """Pull a generic vector back by M^-1 and a plane normal by M^T along f^n(p), ..., p."""
    ref_s, ref_u, ref_c = refs
    shape = p.shape[:-1] + (3,)
    fwd = _orbit(f, p, n, forward=True)
    v = np.broadcast_to(_normalize(ref_s + 0.1 * (ref_u + ref_c)), shape).copy()
    nu = np.broadcast_to(_normalize(np.cross(ref_s, ref_c) + 0.1 * ref_u), shape).copy()
    for j in range(n - 1, -1, -1):
        M = f.derivative_frame(fwd[j])
        v = _normalize(np.linalg.solve(M, v[..., None])[..., 0])
        nu = _normalize(np.einsum("...ji,...j->...i", M, nu))
    return v, nu


def _center(n_cs, n_cu):
    if np.min(_angle(n_cs, n_cu)) < 1e-6:
        raise DegenerateSplitting("splitting degenerate: E^cs and E^cu nearly coincide")
    return _normalize(np.cross(n_cs, n_cu))


def estimate_splitting(f: NilDiffeo, p, n: int = 40) -> FrameSplitting:
    """Estimate E^u, E^c, E^s at p (frame coordinates) by pushing generic vectors
    and planes along orbit segments of length n."""
    if n < 1:
        raise ValueError("horizon must be >= 1")
    p = group.as_points(p)
    refs = f.frame_eigenvectors()
    eU, n_cu = _unstable_side(f, p, n, refs)
    eS, n_cs = _stable_side(f, p, n, refs)
    eC = _center(n_cs, n_cu)
    ref_s, ref_u, ref_c = refs
    return FrameSplitting(_orient(eU, ref_u), _orient(eC, ref_c), _orient(eS, ref_s), n_cs, n_cu, n)


def estimate_bundle(f: NilDiffeo, p, n: int, bundle: str) -> np.ndarray:
    """One bundle of the splitting ('u', 's' or 'c'), skipping unneeded orbit pushes."""
    if n < 1:
        raise ValueError("horizon must be >= 1")
    p = group.as_points(p)
    refs = f.frame_eigenvectors()
    ref_s, ref_u, ref_c = refs
    if bundle == "u":
        return _orient(_unstable_side(f, p, n, refs)[0], ref_u)
    if bundle == "s":
        return _orient(_stable_side(f, p, n, refs)[0], ref_s)
    if bundle == "c":
        eC = _center(_stable_side(f, p, n, refs)[1], _unstable_side(f, p, n, refs)[1])
        return _orient(eC, ref_c)
    raise ValueError(f"unknown bundle {bundle!r}")


def invariance_residuals(f: NilDiffeo, p, n: int = 40) -> dict:
    """Angles between Df(p) e(p) and e(f(p)) for each bundle."""
    p = group.as_points(p)
    here = estimate_splitting(f, p, n)
    there = estimate_splitting(f, f.apply(p), n)
    M = f.derivative_frame(p)
    out = {}
    for name in ("eU", "eC", "eS"):
        pushed = np.einsum("...ij,...j->...i", M, getattr(here, name))
        out[name] = float(np.max(_angle(pushed, getattr(there, name))))
    return out


def cocycle(f: NilDiffeo, p, n: int) -> list:
    """[Df^1(p), ..., Df^n(p)] in frame coordinates."""
    p = group.as_points(p)
    mats, acc, q = [], None, p
    for _ in range(n):
        M = f.derivative_frame(q)
        acc = M if acc is None else M @ acc
        mats.append(acc)
        q = f.apply(q)
    return mats


@dataclass
class PHConstants:
    lambda_s: float
    gamma_hat: float
    gamma: float
    mu: float
    C: float
    margin: float
    ok: bool
    flag: str = ""

    def as_tuple(self) -> tuple:
        return (self.lambda_s, self.gamma_hat, self.gamma, self.mu, self.C)

    def to_json(self) -> dict:
        return {"lambda_s": self.lambda_s, "gamma_hat": self.gamma_hat, "gamma": self.gamma,
                "mu": self.mu, "C": self.C, "margin": self.margin}


def estimate_constants(f: NilDiffeo, sample_count: int = 200, n: int = 20, rng=None,
                       horizon: int = 40, tol: float = 1e-12) -> PHConstants:
    """Finite-time growth-rate extrema over a sample of a fundamental domain."""
    rng = np.random.default_rng(rng)
    pts = f.sample_fundamental(sample_count, rng)
    split = estimate_splitting(f, pts, horizon)
    mats = cocycle(f, pts, n)
    growth = {}
    for name in ("eU", "eC", "eS"):
        e = getattr(split, name)
        growth[name] = np.stack([np.linalg.norm(np.einsum("...ij,...j->...i", M, e), axis=-1)
                                 for M in mats])  # (n, samples)
    rate = {k: g[-1] ** (1.0 / n) for k, g in growth.items()}
    mu = float(rate["eU"].min())
    lambda_s = float(rate["eS"].max())
    gamma = float(rate["eC"].max())
    gamma_hat = float(rate["eC"].min())
    m = np.arange(1, n + 1)[:, None]
    ratios = [
        (mu ** m / growth["eU"]).max(),
        (growth["eS"] / lambda_s ** m).max(),
        (growth["eC"] / gamma ** m).max(),
        (gamma_hat ** m / growth["eC"]).max(),
    ]
    C = float(max(1.0, *ratios))
    # pointwise domination margin in log-rate
    margin = float(min((np.log(rate["eU"]) - np.log(rate["eC"])).min(),
                       (np.log(rate["eC"]) - np.log(rate["eS"])).min()))
    ok = 0 < lambda_s < gamma_hat <= 1 + tol and 1 - tol <= gamma < mu
    flag = "" if ok else "not absolutely PH at this resolution"
    return PHConstants(lambda_s, gamma_hat, gamma, mu, C, margin, bool(ok), flag)
