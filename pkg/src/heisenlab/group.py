"""Arithmetic on the Heisenberg group H in (x, y, z) coordinates.

A point (x, y, z) stands for the unipotent matrix [[1, x, z], [0, 1, y], [0, 0, 1]].
Every function accepts a single point or a stack of points with shape (..., 3)
and returns float64 arrays of the matching shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np


class HPoint(NamedTuple):
    x: float
    y: float
    z: float


IDENTITY = np.zeros(3)


def as_points(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {p.shape}")
    return p


def mul(p, q) -> np.ndarray:
    """Group product (a,b,c)*(x,y,z) = (a+x, b+y, z+c+a*y)."""
    p, q = as_points(p), as_points(q)
    a, b, c = p[..., 0], p[..., 1], p[..., 2]
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    return np.stack(np.broadcast_arrays(a + x, b + y, z + c + a * y), axis=-1)


def inv(p) -> np.ndarray:
    p = as_points(p)
    a, b, c = p[..., 0], p[..., 1], p[..., 2]
    return np.stack([-a, -b, a * b - c], axis=-1)


def commutator(p, q) -> np.ndarray:
    """[p, q] = p q p^-1 q^-1; always central, equal to (0, 0, p_x q_y - p_y q_x)."""
    return mul(mul(p, q), mul(inv(p), inv(q)))


def to_matrix(p) -> np.ndarray:
    p = as_points(p)
    m = np.zeros(p.shape[:-1] + (3, 3))
    m[..., 0, 0] = m[..., 1, 1] = m[..., 2, 2] = 1.0
    m[..., 0, 1] = p[..., 0]
    m[..., 1, 2] = p[..., 1]
    m[..., 0, 2] = p[..., 2]
    return m


def from_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 0, 1], m[..., 1, 2], m[..., 0, 2]], axis=-1)


# -- exponential coordinates -------------------------------------------------

def exp_h(w) -> np.ndarray:
    """exp(uX + vY + wZ) = (u, v, w + uv/2)."""
    w = as_points(w)
    u, v, t = w[..., 0], w[..., 1], w[..., 2]
    return np.stack([u, v, t + 0.5 * u * v], axis=-1)


def log_h(p) -> np.ndarray:
    p = as_points(p)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.stack([x, y, z - 0.5 * x * y], axis=-1)


# -- projections -------------------------------------------------------------

def proj_s(p) -> np.ndarray:
    return as_points(p)[..., 0]


def proj_u(p) -> np.ndarray:
    return as_points(p)[..., 1]


def proj_P(p) -> np.ndarray:
    return as_points(p)[..., :2]


# -- left-invariant frame ----------------------------------------------------

def frame_matrix(p) -> np.ndarray:
    """Columns are X, Y, Z at p in ambient coordinates: X=(1,0,0), Y=(0,1,x), Z=(0,0,1)."""
    p = as_points(p)
    m = np.zeros(p.shape[:-1] + (3, 3))
    m[..., 0, 0] = m[..., 1, 1] = m[..., 2, 2] = 1.0
    m[..., 2, 1] = p[..., 0]
    return m


def frame_matrix_inv(p) -> np.ndarray:
    p = as_points(p)
    m = np.zeros(p.shape[:-1] + (3, 3))
    m[..., 0, 0] = m[..., 1, 1] = m[..., 2, 2] = 1.0
    m[..., 2, 1] = -p[..., 0]
    return m


def frame_coords(p, v) -> np.ndarray:
    """Ambient tangent vector v at p -> coordinates in the frame (X, Y, Z)."""
    p, v = as_points(p), as_points(v)
    x = p[..., 0]
    vx, vy, vz = np.broadcast_arrays(v[..., 0], v[..., 1], v[..., 2] - x * v[..., 1])
    return np.stack([vx, vy, vz], axis=-1)


def frame_to_ambient(p, w) -> np.ndarray:
    p, w = as_points(p), as_points(w)
    x = p[..., 0]
    a, b, c = np.broadcast_arrays(w[..., 0], w[..., 1], w[..., 2] + x * w[..., 1])
    return np.stack([a, b, c], axis=-1)


def frame_norm(p, v) -> np.ndarray:
    return np.linalg.norm(frame_coords(p, v), axis=-1)


def path_length(points) -> float:
    """Left-invariant length of a polyline.

    Each chord is measured in the frame at its midpoint, so the result is an
    upper-bound style estimate of d(start, end) that converges under refinement.
    """
    pts = as_points(points)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("path_length needs at least two points")
    chords = np.diff(pts, axis=0)
    mids = 0.5 * (pts[1:] + pts[:-1])
    return float(frame_norm(mids, chords).sum())


def commutator_path(z: float, per_leg: int = 64) -> np.ndarray:
    """Square path (0,0,0) -> (s,0,0) -> (s,s,z) -> (0,s,z) -> (0,0,z), s = sqrt(z).

    Each leg is an integral curve of +-X or +-Y, so its length is exactly 4*sqrt(z).
    """
    s = math.sqrt(z)
    t = np.linspace(0.0, 1.0, per_leg + 1)
    legs = [
        np.stack([s * t, 0 * t, 0 * t], axis=-1),
        np.stack([s + 0 * t, s * t, s * s * t], axis=-1),
        np.stack([s * (1 - t), s + 0 * t, z + 0 * t], axis=-1),
        np.stack([0 * t, s * (1 - t), z + 0 * t], axis=-1),
    ]
    return np.concatenate([legs[0]] + [leg[1:] for leg in legs[1:]])


# -- lattices ----------------------------------------------------------------

@dataclass(frozen=True)
class LatticeElement:
    """Exact element (a, b, j/k) of the lattice Gamma_k."""

    a: int
    b: int
    j: int
    k: int

    @property
    def z(self) -> Fraction:
        return Fraction(self.j, self.k)

    def __mul__(self, other: "LatticeElement") -> "LatticeElement":
        if self.k != other.k:
            raise ValueError("lattice elements from different lattices")
        # z = j'/k + j/k + a*b' with a*b' integer
        return LatticeElement(self.a + other.a, self.b + other.b,
                              self.j + other.j + self.k * self.a * other.b, self.k)

    def inverse(self) -> "LatticeElement":
        return LatticeElement(-self.a, -self.b, self.k * self.a * self.b - self.j, self.k)

    def as_array(self) -> np.ndarray:
        return np.array([float(self.a), float(self.b), self.j / self.k])


@dataclass(frozen=True)
class Lattice:
    """Gamma_k generated by (1,0,0), (0,1,0), (0,0,1/k)."""

    k: int = 1

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ValueError(f"lattice index must be a positive integer, got {self.k!r}")

    @property
    def generators(self) -> np.ndarray:
        return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0 / self.k]])

    def exact_generators(self) -> list[LatticeElement]:
        k = self.k
        return [LatticeElement(1, 0, 0, k), LatticeElement(0, 1, 0, k), LatticeElement(0, 0, 1, k)]

    def contains_exact(self, x, y, z) -> bool:
        """Membership for exact (int / Fraction) coordinates."""
        x, y, z = Fraction(x), Fraction(y), Fraction(z)
        return x.denominator == 1 and y.denominator == 1 and (z * self.k).denominator == 1

    def nearest(self, p, tol: float = 0.25):
        """Round p to the nearest lattice element, or None if any coordinate is
        farther than tol (in units of that coordinate's lattice spacing)."""
        p = np.asarray(p, dtype=float)
        a, b, j = round(p[0]), round(p[1]), round(p[2] * self.k)
        if abs(p[0] - a) > tol or abs(p[1] - b) > tol or abs(p[2] * self.k - j) > tol:
            return None
        return LatticeElement(int(a), int(b), int(j), self.k)

    def to_json(self) -> dict:
        return {"k": int(self.k)}

    @classmethod
    def from_json(cls, data: dict) -> "Lattice":
        return cls(int(data["k"]))


def reduce(p, lattice: Lattice):
    """Split p = gamma * q with gamma in the lattice and q in the fundamental cube.

    q has x, y in [0, 1) and z in [0, 1/k). Floors are taken on x, then y, then
    on z after removing (floor x, floor y, 0).
    """
    p = as_points(p)
    k = lattice.k
    a = np.floor(p[..., 0])
    b = np.floor(p[..., 1])
    qx = p[..., 0] - a
    qy = p[..., 1] - b
    a = np.where(qx >= 1.0, a + 1, a)
    qx = np.where(qx >= 1.0, qx - 1.0, qx)
    b = np.where(qy >= 1.0, b + 1, b)
    qy = np.where(qy >= 1.0, qy - 1.0, qy)
    # (a,b,0)^-1 * p has z-coordinate z - a*(y - b)
    zr = p[..., 2] - a * qy
    j = np.floor(zr * k)
    qz = zr - j / k
    # guard the half-open intervals against rounding to the upper end
    over = qz >= 1.0 / k
    j = np.where(over, j + 1, j)
    qz = np.where(over, qz - 1.0 / k, qz)
    gamma = np.stack([a, b, j / k], axis=-1)
    q = np.stack([qx, qy, qz], axis=-1)
    return gamma, q


def reduce_exact(p, lattice: Lattice):
    """Like reduce for one point, returning the lattice part as a LatticeElement."""
    gamma, q = reduce(np.asarray(p, dtype=float), lattice)
    return LatticeElement(int(gamma[0]), int(gamma[1]), int(round(gamma[2] * lattice.k)), lattice.k), q


@dataclass(frozen=True)
class Box:
    """B(x0, y0, z0) = {|x| <= x0, |y| <= y0, |z| <= z0}; bounds may be inf."""

    x0: float = math.inf
    y0: float = math.inf
    z0: float = math.inf

    def contains(self, p, slack: float = 0.0) -> np.ndarray:
        p = as_points(p)
        return ((np.abs(p[..., 0]) <= self.x0 + slack)
                & (np.abs(p[..., 1]) <= self.y0 + slack)
                & (np.abs(p[..., 2]) <= self.z0 + slack))


def point_to_json(p) -> list:
    return [float(v) for v in np.asarray(p, dtype=float).reshape(3)]
