"""Closed-form linear algebra for 2x2 matrices and planar affine maps.

Matrices are plain ``numpy`` arrays of shape ``(2, 2)``; the vectorised
helpers (``singular_values``, ``major_angles``) also accept stacks of shape
``(..., 2, 2)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import EqualSingularValues, SingularMatrix

SINGULAR_TOL = 1e-14
GAP_TOL = 1e-12


def rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _abcd(A):
    A = np.asarray(A, dtype=float)
    return A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]


def _svd_parts(A):
    a, b, c, d = _abcd(A)
    E = (a + d) / 2
    F = (a - d) / 2
    G = (c + b) / 2
    H = (c - b) / 2
    Q = np.hypot(E, H)
    R = np.hypot(F, G)
    a1 = np.arctan2(G, F)
    a2 = np.arctan2(H, E)
    # A = rot(phi) @ diag(Q + R, Q - R) @ rot(theta)
    return Q, R, (a2 - a1) / 2, (a2 + a1) / 2


def singular_values(A):
    """Return ``(alpha1, alpha2)`` for a matrix or a stack of matrices.

    The minor value is recovered as ``|det| / alpha1`` which keeps full
    relative accuracy for ill-conditioned inputs.
    """
    a, b, c, d = _abcd(A)
    Q, R, _, _ = _svd_parts(A)
    alpha1 = Q + R
    det = np.abs(a * d - b * c)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha2 = np.where(alpha1 > 0, det / np.where(alpha1 > 0, alpha1, 1.0), 0.0)
    return alpha1, alpha2


def major_angles(A):
    """Angle in ``[0, pi)`` of the major axis of ``A(unit ball)`` (vectorised).

    No gap check is made; callers that need ``L(A)`` to be defined should use
    :func:`major_direction`.
    """
    _, _, _, phi = _svd_parts(A)
    return np.mod(phi, np.pi)


@dataclass(frozen=True)
class ProjectivePoint:
    """A line through the origin, stored as its angle in ``[0, pi)``."""

    angle: float

    def __post_init__(self):
        a = float(np.mod(float(self.angle), np.pi))
        if a >= np.pi:
            a = 0.0
        object.__setattr__(self, "angle", a)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            raise ValueError("zero vector has no direction")
        return cls(np.arctan2(v[1], v[0]))

    @property
    def vector(self):
        return np.array([np.cos(self.angle), np.sin(self.angle)])

    @property
    def perp(self):
        return ProjectivePoint(self.angle + np.pi / 2)

    def projector(self):
        v = self.vector
        return np.outer(v, v)


E1 = ProjectivePoint(0.0)
E2 = ProjectivePoint(np.pi / 2)


@dataclass(frozen=True)
class Svd2:
    V: np.ndarray
    D: np.ndarray
    U: np.ndarray

    @property
    def alpha1(self):
        return float(self.D[0, 0])

    @property
    def alpha2(self):
        return float(self.D[1, 1])

    def reconstruct(self):
        return self.V @ self.D @ self.U


def _check_invertible(A):
    A = np.asarray(A, dtype=float)
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < SINGULAR_TOL * max(np.sum(A * A), np.finfo(float).tiny):
        raise SingularMatrix(f"matrix {A.tolist()} is singular (det={det:g})")
    return A


def svd2(A):
    """Closed-form singular value decomposition ``A = V D U``.

    ``V`` is a rotation whose first column lies in the closed upper half-plane
    (ties at angle 0 point to +x). ``U`` is a rotation when ``det A > 0`` and a
    reflection otherwise, since ``det V * det U`` must carry the sign of
    ``det A``.
    """
    A = _check_invertible(A)
    Q, R, theta, phi = (float(x) for x in _svd_parts(A))
    alpha1, alpha2 = (float(x) for x in singular_values(A))
    V = rotation(phi)
    U = rotation(theta)
    if Q - R < 0:
        U = np.diag([1.0, -1.0]) @ U
    v = V[:, 0]
    if v[1] < 0 or (v[1] == 0 and v[0] < 0):
        V = -V
        U = -U
    return Svd2(V=V, D=np.diag([alpha1, alpha2]), U=U)


def major_direction(A):
    """``L(A)``: the direction of the major axis of ``A`` applied to the unit ball."""
    A = _check_invertible(A)
    alpha1, alpha2 = singular_values(A)
    if alpha1 - alpha2 <= GAP_TOL * alpha1:
        raise EqualSingularValues("L(A) is undefined when alpha1 == alpha2")
    return ProjectivePoint(float(major_angles(A)))


def rp1_distance(V, W):
    """``||pi_V - pi_W||_op``, which in the plane is ``|sin(angle(V, W))|``."""
    return abs(float(np.sin(V.angle - W.angle)))


@dataclass(frozen=True, eq=False)
class AffineMap2:
    """``x -> A x + b`` with invertible ``A``."""

    A: np.ndarray
    b: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(2, 2)
        b = np.array(self.b, dtype=float).reshape(2)
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def identity(cls):
        return cls(np.eye(2), np.zeros(2))

    @classmethod
    def translation(cls, t):
        return cls(np.eye(2), t)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.A.T + self.b

    def __matmul__(self, other):
        return affine_compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, AffineMap2):
            return NotImplemented
        return np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b)

    __hash__ = None

    def __repr__(self):
        return f"AffineMap2(A={self.A.tolist()}, b={self.b.tolist()})"

    def matrix3(self):
        M = np.eye(3)
        M[:2, :2] = self.A
        M[:2, 2] = self.b
        return M

    def vec6(self):
        """The six free entries of the 3x3 embedding: ``a11 a12 a21 a22 b1 b2``."""
        return np.concatenate([self.A.ravel(), self.b])

    def fixed_point(self):
        return np.linalg.solve(np.eye(2) - self.A, self.b)


def affine_compose(f, g):
    """``f o g``."""
    return AffineMap2(f.A @ g.A, f.A @ g.b + f.b)


def affine_invert(f):
    A = _check_invertible(f.A)
    a, b, c, d = A.ravel()
    det = a * d - b * c
    Ainv = np.array([[d, -b], [-c, a]]) / det
    return AffineMap2(Ainv, -Ainv @ f.b)


def projection_of_composition(W, phi):
    """Write ``pi_W o phi`` as ``scale * pi_{A* W} + offset``.

    Returns ``(scale, direction, offset)`` with ``scale = ||pi_W A||``,
    ``direction`` the pull-back line spanned by ``A^T w`` and
    ``offset = pi_W(b)``. The sign ambiguity of the identification of the
    lines with R is resolved by orienting ``A* W`` along ``A^T w``.
    """
    _check_invertible(phi.A)
    w = W.vector
    v = phi.A.T @ w
    return float(np.hypot(v[0], v[1])), ProjectivePoint.from_vector(v), float(w @ phi.b)


def norm_distance(f, g):
    """Frobenius distance between the 3x3 matrix embeddings of ``f`` and ``g``."""
    return float(np.linalg.norm(f.vec6() - g.vec6()))


def _rho(h):
    M = h.matrix3()
    Minv = affine_invert(h).matrix3()
    eye = np.eye(3)
    return float(np.linalg.norm(M - eye) + np.linalg.norm(Minv - eye))


def invariant_distance(f, g):
    """Left-invariant distance ``rho(g^-1 o f)``.

    ``rho(h) = ||M(h) - I||_F + ||M(h)^-1 - I||_F``; symmetric because
    ``rho(h^-1) = rho(h)``, and ``d(q f, q g) = d(f, g)`` since
    ``(q g)^-1 (q f) = g^-1 f``.
    """
    return _rho(affine_compose(affine_invert(g), f))
