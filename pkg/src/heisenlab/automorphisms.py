"""The automorphism group G of the Heisenberg Lie algebra and the induced
Lie group automorphisms Phi(x, y, z) = (A(x, y), c z + p(x, y))."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import group
from .group import Lattice, LatticeElement


class NotAnAutomorphism(ValueError):
    pass


@dataclass(frozen=True)
class GMatrix:
    """[[A, 0], [alpha beta, det A]] acting on the basis X, Y, Z."""

    A: tuple
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float)
        if a.shape != (2, 2):
            raise ValueError("A must be 2x2")
        object.__setattr__(self, "A", tuple(tuple(float(v) for v in row) for row in a))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def a2(self) -> np.ndarray:
        return np.array(self.A)

    @property
    def det(self) -> float:
        (a, b), (c, d) = self.A
        return a * d - b * c

    @property
    def matrix(self) -> np.ndarray:
        m = np.zeros((3, 3))
        m[:2, :2] = self.A
        m[2, 0], m[2, 1], m[2, 2] = self.alpha, self.beta, self.det
        return m

    @classmethod
    def from_matrix(cls, m, atol: float = 1e-9) -> "GMatrix":
        m = np.asarray(m, dtype=float)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(m[0, 2]) > atol or abs(m[1, 2]) > atol or abs(m[2, 2] - det) > atol * max(1.0, abs(det)):
            raise ValueError("matrix is not of the form [[A, 0], [u, det A]]")
        return cls(m[:2, :2], m[2, 0], m[2, 1])

    @classmethod
    def diagonal(cls, l1: float, l2: float) -> "GMatrix":
        return cls(((l1, 0.0), (0.0, l2)))

    @classmethod
    def identity(cls) -> "GMatrix":
        return cls(((1.0, 0.0), (0.0, 1.0)))

    def __matmul__(self, other: "GMatrix") -> "GMatrix":
        return GMatrix.from_matrix(self.matrix @ other.matrix)

    def inverse(self) -> "GMatrix":
        if self.det == 0:
            raise NotAnAutomorphism("not an automorphism: det A = 0")
        return GMatrix.from_matrix(np.linalg.inv(self.matrix))

    def to_json(self) -> dict:
        return {"A": [list(r) for r in self.A], "alpha": self.alpha, "beta": self.beta}

    @classmethod
    def from_json(cls, data: dict) -> "GMatrix":
        return cls(data["A"], data.get("alpha", 0.0), data.get("beta", 0.0))


@dataclass(frozen=True)
class HAutomorphism:
    """Phi(x, y, z) = (A(x, y), c z + alpha x + beta y + e x^2 + f x y + g y^2)."""

    A: tuple
    alpha: float
    beta: float
    quad: tuple
    c: float

    @property
    def gmatrix(self) -> GMatrix:
        return GMatrix(self.A, self.alpha, self.beta)

    def __call__(self, p) -> np.ndarray:
        p = group.as_points(p)
        (a, b), (c, d) = self.A
        e, f, g = self.quad
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        poly = self.alpha * x + self.beta * y + e * x * x + f * x * y + g * y * y
        return np.stack([a * x + b * y, c * x + d * y, self.c * z + poly], axis=-1)

    def apply_exact(self, x, y, z) -> tuple:
        """Evaluate with Fraction arithmetic; float coefficients are taken exactly."""
        (a, b), (c, d) = [[Fraction(v) for v in row] for row in self.A]
        e, f, g = (Fraction(v) for v in self.quad)
        al, be, cc = Fraction(self.alpha), Fraction(self.beta), Fraction(self.c)
        x, y, z = Fraction(x), Fraction(y), Fraction(z)
        return (a * x + b * y, c * x + d * y,
                cc * z + al * x + be * y + e * x * x + f * x * y + g * y * y)

    def jacobian(self, p) -> np.ndarray:
        """Coordinate Jacobian d(Phi)/d(x,y,z) at p, shape (..., 3, 3)."""
        p = group.as_points(p)
        (a, b), (c, d) = self.A
        e, f, g = self.quad
        x, y = p[..., 0], p[..., 1]
        jac = np.zeros(p.shape[:-1] + (3, 3))
        jac[..., 0, 0], jac[..., 0, 1] = a, b
        jac[..., 1, 0], jac[..., 1, 1] = c, d
        jac[..., 2, 0] = self.alpha + 2 * e * x + f * y
        jac[..., 2, 1] = self.beta + f * x + 2 * g * y
        jac[..., 2, 2] = self.c
        return jac

    def frame_derivative(self, p) -> np.ndarray:
        """Derivative at p expressed frame-to-frame; constant, equal to the GMatrix."""
        p = group.as_points(p)
        return group.frame_matrix_inv(self(p)) @ self.jacobian(p) @ group.frame_matrix(p)

    def inverse(self) -> "HAutomorphism":
        return from_derivative(self.gmatrix.inverse())

    def compose(self, other: "HAutomorphism") -> "HAutomorphism":
        """self o other."""
        return from_derivative(self.gmatrix @ other.gmatrix)

    def to_json(self) -> dict:
        out = self.gmatrix.to_json()
        out["quad"] = list(self.quad)
        out["c"] = self.c
        return out

    @classmethod
    def from_json(cls, data: dict) -> "HAutomorphism":
        return cls(tuple(tuple(float(v) for v in r) for r in data["A"]), float(data["alpha"]),
                   float(data["beta"]), tuple(float(v) for v in data["quad"]), float(data["c"]))


def from_derivative(L: GMatrix) -> HAutomorphism:
    """The unique automorphism whose derivative at the identity is L.

    Matching coefficients in Phi(u v) = Phi(u) Phi(v) with A = [[a, b], [c, d]]
    gives x^2: e = ac/2, xy: f = bc, y^2: g = bd/2.
    """
    (a, b), (c, d) = L.A
    det = a * d - b * c
    if det == 0:
        raise NotAnAutomorphism("not an automorphism: det A = 0")
    return HAutomorphism(L.A, L.alpha, L.beta, (a * c / 2, b * c, b * d / 2), det)


def identity_automorphism() -> HAutomorphism:
    return from_derivative(GMatrix.identity())


def swap_automorphism() -> HAutomorphism:
    """(x, y, z) -> (-y, x, z - xy); satisfies proj_u o Phi = proj_s."""
    return from_derivative(GMatrix(((0.0, -1.0), (1.0, 0.0))))


# -- spectra and normal forms -------------------------------------------------

def eigenvalues_2x2(A) -> tuple:
    """Roots of t^2 - tr t + det, computed without cancellation; complex pair if disc < 0."""
    (a, b), (c, d) = [[float(v) for v in row] for row in np.asarray(A, dtype=float)]
    tr, det = a + d, a * d - b * c
    disc = tr * tr - 4 * det
    if disc < 0:
        s = math.sqrt(-disc)
        return complex(tr / 2, s / 2), complex(tr / 2, -s / 2)
    s = math.sqrt(disc)
    r1 = 0.5 * (tr + math.copysign(s, tr)) if tr != 0 else 0.5 * s
    r2 = det / r1 if r1 != 0 else 0.5 * (tr - s)
    return (r1, r2) if abs(r1) >= abs(r2) else (r2, r1)


def is_partially_hyperbolic(T: GMatrix, det_tol: float = 1e-12):
    """Return (flag, (l1, l2, l3)) with |l1| < 1 < |l2| and l3 = det A when flag holds."""
    big, small = eigenvalues_2x2(T.A)
    l3 = T.det
    if isinstance(big, complex):
        return False, (small, big, l3)
    ok = bool(abs(abs(l3) - 1.0) <= det_tol and abs(small) < 1.0 < abs(big))
    if ok:
        # structure of G forces l1 * l2 = l3
        assert abs(small * big - l3) <= 1e-9 * max(1.0, abs(big)), "eigenvalue product mismatch"
    return ok, (small, big, l3)


def _left_eigenvector(A: np.ndarray, lam: float) -> np.ndarray:
    m = A - lam * np.eye(2)
    col = m[:, 0] if np.linalg.norm(m[:, 0]) >= np.linalg.norm(m[:, 1]) else m[:, 1]
    if np.linalg.norm(col) == 0:
        raise ValueError("degenerate eigenvalue")
    ell = np.array([col[1], -col[0]])
    ell /= np.linalg.norm(ell)
    return ell if ell[np.argmax(np.abs(ell))] > 0 else -ell


def conjugate_to_diagonal(T: GMatrix):
    """Return (P, D) in G with P T P^-1 = D = diag(l1, l2, 1).

    P is the shear [[I, 0], [v, 1]] with v = u (I - A)^-1 followed by the block
    [[P_A, 0], [0, 1]], P_A in SL(2, R) built from left eigenvectors of A.
    """
    ok, (l1, l2, l3) = is_partially_hyperbolic(T)
    if not ok:
        raise NotAnAutomorphism("matrix is not partially hyperbolic (A not hyperbolic or |det A| != 1)")
    if l3 < 0:
        raise ValueError("eigenvalue -1 on the center: square the map first")
    A = T.a2
    u = np.array([T.alpha, T.beta])
    v = u @ np.linalg.inv(np.eye(2) - A)
    shear = GMatrix(np.eye(2), v[0], v[1])
    rows = np.array([_left_eigenvector(A, l1), _left_eigenvector(A, l2)])
    rows[1] /= np.linalg.det(rows)
    P = GMatrix(rows) @ shear
    return P, GMatrix.diagonal(l1, l2)


def shear_vector(T: GMatrix) -> np.ndarray:
    """The row vector v solving v A + u - v = 0."""
    u = np.array([T.alpha, T.beta])
    return u @ np.linalg.inv(np.eye(2) - T.a2)


# -- lattices -----------------------------------------------------------------

def preserves_lattice(phi: HAutomorphism, lattice: Lattice) -> bool:
    images = [phi.apply_exact(g.a, g.b, g.z) for g in lattice.exact_generators()]
    if not all(lattice.contains_exact(*img) for img in images):
        return False
    (a, c, _), (b, d, _), (zx, zy, zz) = images
    det = a * d - b * c
    if abs(det) != 1:
        return False
    return zx == 0 and zy == 0 and abs(zz) == Fraction(1, lattice.k)


def automorphism_from_generator_images(images: list[LatticeElement], lattice: Lattice) -> HAutomorphism:
    """Assemble Phi from exact images of (1,0,0), (0,1,0), (0,0,1/k)."""
    ga, gb, gc = images
    A = ((ga.a, gb.a), (ga.b, gb.b))
    det = ga.a * gb.b - gb.a * ga.b
    if gc.a != 0 or gc.b != 0 or Fraction(gc.j) != det:
        raise NotAnAutomorphism("generator images are inconsistent with an automorphism")
    e = Fraction(ga.a * ga.b, 2)
    g = Fraction(gb.a * gb.b, 2)
    alpha = ga.z - e
    beta = gb.z - g
    return from_derivative(GMatrix(A, float(alpha), float(beta)))


def algebraic_part(f, lattice: Lattice, sample_count: int = 16, rng=None, tol: float = 0.25) -> HAutomorphism:
    """Recover the automorphism agreeing with f_* on the lattice.

    f is a vectorized map on (..., 3) arrays satisfying f(g p) = f_*(g) f(p).
    Every sample of f(g p) f(p)^-1 is rounded to the lattice and must agree.
    """
    rng = np.random.default_rng(rng)
    pts = rng.random((sample_count, 3))
    pts[:, 2] /= lattice.k
    fp_inv = group.inv(f(pts))
    images = []
    for gen in lattice.generators:
        raw = group.mul(f(group.mul(gen, pts)), fp_inv)
        rounded = {lattice.nearest(r, tol) for r in raw}
        if None in rounded or len(rounded) != 1:
            raise ValueError("not Gamma-equivariant or rounding ambiguous")
        images.append(rounded.pop())
    return automorphism_from_generator_images(images, lattice)


def displacement_sup(f, phi: HAutomorphism, lattice: Lattice, sample_count: int = 1000, rng=None) -> float:
    """sup over fundamental-domain samples of an upper bound on d(f(p), Phi(p)).

    d(0, g) <= |log g| because t -> exp(t log g) has constant frame velocity.
    """
    rng = np.random.default_rng(rng)
    pts = rng.random((sample_count, 3))
    pts[:, 2] /= lattice.k
    gap = group.mul(group.inv(phi(pts)), f(pts))
    return float(np.linalg.norm(group.log_h(gap), axis=-1).max())


def lattice_normalizer(a, b, c, k: int, tol: float = 1e-10) -> HAutomorphism:
    """Automorphism sending generators a, b, c (with [a, b] = c^k) to the standard
    generators (1,0,0), (0,1,0), (0,0,1/k) of Gamma_k."""
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    comm = group.commutator(a, b)
    ck = np.array([k * c[0], k * c[1], k * c[2]])
    if abs(c[0]) > tol or abs(c[1]) > tol or np.max(np.abs(comm - ck)) > tol:
        raise ValueError("generators violate [a, b] = c^k")
    logs = np.column_stack([group.log_h(a), group.log_h(b), group.log_h(c)])
    target = np.diag([1.0, 1.0, 1.0 / k])
    L = target @ np.linalg.inv(logs)
    return from_derivative(GMatrix.from_matrix(L, atol=1e-8))
