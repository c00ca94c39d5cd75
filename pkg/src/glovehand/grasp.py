"""Grasp map, object wrench and fingertip force fields.

A grasp with ``p`` point contacts maps stacked fingertip forces ``F``
(length ``3p``) to the net object wrench ``[force; moment]`` via
``G = [[I, I, ...], [skew(r_1), skew(r_2), ...]]``.  Forces in the null space
of ``G`` squeeze the object without moving it.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from typing import Sequence

import numpy as np

from .se3 import pinv_and_null, skew


class InfeasibleSqueezeError(ValueError):
    """The contact geometry cannot reach the requested normal force."""


@dataclass(frozen=True)
class Contact:
    r: np.ndarray
    inward_normal: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).reshape(3)
        n = np.asarray(self.inward_normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("inward_normal must be a unit vector")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "inward_normal", n)


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray
    moment: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.force, float), np.asarray(self.moment, float)])

    @classmethod
    def from_vector(cls, w) -> "Wrench":
        w = np.asarray(w, dtype=float).reshape(6)
        return cls(w[:3].copy(), w[3:].copy())


@dataclass(frozen=True)
class ObjectInertia:
    mass: float
    inertia: np.ndarray
    omega: np.ndarray = np.zeros(3)

    def __post_init__(self):
        I = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if not self.mass > 0:
            raise ValueError("object mass must be positive")
        if not np.allclose(I, I.T, atol=1e-12, rtol=0.0):
            raise ValueError("inertia tensor must be symmetric")
        if np.min(np.linalg.eigvalsh(I)) <= 0:
            raise ValueError("inertia tensor must be positive definite")
        object.__setattr__(self, "inertia", I)
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))

    @classmethod
    def solid_sphere(cls, mass: float, radius: float, omega=(0.0, 0.0, 0.0)):
        return cls(mass, np.eye(3) * 0.4 * mass * radius ** 2, np.asarray(omega, float))

    @classmethod
    def solid_box(cls, mass: float, size, omega=(0.0, 0.0, 0.0)):
        a, b, c = np.asarray(size, dtype=float)
        I = mass / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])
        return cls(mass, I, np.asarray(omega, float))


@dataclass(frozen=True)
class GraspMatrix:
    contacts: tuple
    G: np.ndarray

    @property
    def p(self) -> int:
        return len(self.contacts)


@dataclass(frozen=True)
class ForceSolution:
    particular: np.ndarray      # (p, 3)
    null_basis: np.ndarray      # (3p, 3p - rank G), orthonormal columns
    alpha: np.ndarray           # coefficients on null_basis

    def interaction(self) -> np.ndarray:
        if self.null_basis.shape[1] == 0:
            return np.zeros_like(self.particular)
        return (self.null_basis @ self.alpha).reshape(-1, 3)

    def total(self) -> np.ndarray:
        """Per-contact forces, shape ``(p, 3)``."""
        return self.particular + self.interaction()


def build_grasp_matrix(contacts: Sequence[Contact]) -> GraspMatrix:
    contacts = tuple(contacts)
    if not contacts:
        raise ValueError("grasp needs at least one contact")
    G = np.zeros((6, 3 * len(contacts)))
    for i, c in enumerate(contacts):
        G[:3, 3 * i:3 * i + 3] = np.eye(3)
        G[3:, 3 * i:3 * i + 3] = skew(c.r)
    return GraspMatrix(contacts, G)


def object_wrench(inertia: ObjectInertia, a_o, omega_dot) -> Wrench:
    a_o = np.asarray(a_o, dtype=float).reshape(3)
    wd = np.asarray(omega_dot, dtype=float).reshape(3)
    I, w = inertia.inertia, inertia.omega
    return Wrench(inertia.mass * a_o, I @ wd + np.cross(w, I @ w))


def force_decompose(grasp: GraspMatrix, wrench: Wrench) -> ForceSolution:
    """Minimum-norm equilibrating forces plus the null-space basis of ``G``."""
    W = wrench.vector()
    G_pinv, N = pinv_and_null(grasp.G)
    F = G_pinv @ W
    return ForceSolution(F.reshape(-1, 3), N, np.zeros(N.shape[1]))


def joining_line_fields(contacts: Sequence[Contact]) -> np.ndarray:
    """Stacked pair-squeeze fields, one column per contact pair.

    Column ``(i, j)`` pushes contact ``i`` toward ``j`` and ``j`` toward ``i``
    with unit magnitude; each column lies in the null space of ``G``.
    """
    p = len(contacts)
    cols = []
    for i, j in combinations(range(p), 2):
        d = contacts[j].r - contacts[i].r
        n = np.linalg.norm(d)
        if n < 1e-12:
            continue
        u = d / n
        col = np.zeros(3 * p)
        col[3 * i:3 * i + 3] = u
        col[3 * j:3 * j + 3] = -u
        cols.append(col)
    if not cols:
        return np.zeros((3 * p, 0))
    return np.column_stack(cols)


def select_interaction_forces(sol: ForceSolution, contacts: Sequence[Contact],
                              f_min: float, tol: float = 1e-9) -> ForceSolution:
    """Add a squeeze along fingertip-joining lines so that each contact's
    inward normal force is at least ``f_min``.

    The pair magnitudes are a least-squares fit of the per-contact normal
    deficits; infeasible geometry raises :class:`InfeasibleSqueezeError`.
    """
    contacts = tuple(contacts)
    p = len(contacts)
    if p < 2:
        raise ValueError("interaction forces need at least two contacts")
    if f_min < 0:
        raise ValueError("f_min must be non-negative")
    if f_min == 0:
        return sol
    normals = np.array([c.inward_normal for c in contacts])
    current = np.einsum("ij,ij->i", sol.total(), normals)
    deficit = np.maximum(f_min - current, 0.0)
    if not np.any(deficit > tol):
        return sol

    E = joining_line_fields(contacts)
    # A[i, k]: normal component at contact i produced by unit squeeze k
    A = np.einsum("ijk,ij->ik", E.reshape(p, 3, -1), normals)
    s, *_ = np.linalg.lstsq(A, deficit, rcond=None)
    achieved = current + A @ s
    if np.any(achieved < f_min - tol):
        worst = int(np.argmin(achieved - f_min))
        raise InfeasibleSqueezeError(
            f"contact {worst} reaches {achieved[worst]:.6g} N normal force, "
            f"below f_min={f_min:g} N")
    F_int = E @ s
    if sol.null_basis.shape[1] == 0:
        raise InfeasibleSqueezeError("grasp matrix has no null space")
    # express the squeeze in the orthonormal null basis, on top of any
    # interaction already present
    alpha = sol.alpha + sol.null_basis.T @ F_int
    return replace(sol, alpha=alpha)
