"""Reparametrised time axis, fractional orders, meshes, weighted grid data.

Everything downstream works in the transformed coordinate ``x = psi(t)``:
kernels become classical power kernels there, so a single quadrature engine
covers the identity, logarithm, and power reparametrisations.  Grid data may
carry a weight exponent ``w``, in which case the stored numbers are
``(psi(t) - psi(a))**w * u(t)``; that representation keeps data finite at
``t = a`` even when ``u`` itself blows up like ``(psi(t) - psi(a))**(g-1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError

__all__ = [
    "PsiMap",
    "FracOrder",
    "Mesh",
    "GridFunction",
    "psi_eval",
    "build_mesh",
    "weighted_norm",
]

_PSI_KINDS = ("identity", "logarithm", "power")


@dataclass(frozen=True)
class PsiMap:
    """Increasing reparametrisation of the time axis.

    ``identity`` maps t -> t, ``logarithm`` maps t -> ln t (t > 0), and
    ``power`` maps t -> t**rho (t >= 0, rho > 0).  ``rho`` is ignored by
    the other two kinds.
    """

    kind: str
    rho: float = 1.0

    def __post_init__(self):
        if self.kind not in _PSI_KINDS:
            raise DomainError(
                f"unknown psi kind {self.kind!r}; expected one of {_PSI_KINDS}"
            )
        if self.kind == "power" and not (
            math.isfinite(self.rho) and self.rho > 0.0
        ):
            raise DomainError(f"power map requires rho > 0, got {self.rho!r}")

    def value(self, t):
        """psi(t); accepts scalars or arrays."""
        if self.kind == "identity":
            return np.asarray(t, dtype=float) + 0.0 if isinstance(t, np.ndarray) else float(t)
        if self.kind == "logarithm":
            arr = np.asarray(t, dtype=float)
            if np.any(arr <= 0.0):
                raise DomainError("logarithm map requires t > 0")
            out = np.log(arr)
            return out if isinstance(t, np.ndarray) else float(out)
        arr = np.asarray(t, dtype=float)
        if np.any(arr < 0.0):
            raise DomainError("power map requires t >= 0")
        out = np.power(arr, self.rho)
        return out if isinstance(t, np.ndarray) else float(out)

    def deriv(self, t):
        """psi'(t); positive on the interior of the admissible domain."""
        if self.kind == "identity":
            return np.ones_like(np.asarray(t, dtype=float)) if isinstance(t, np.ndarray) else 1.0
        if self.kind == "logarithm":
            arr = np.asarray(t, dtype=float)
            if np.any(arr <= 0.0):
                raise DomainError("logarithm map requires t > 0")
            out = 1.0 / arr
            return out if isinstance(t, np.ndarray) else float(out)
        arr = np.asarray(t, dtype=float)
        if np.any(arr < 0.0):
            raise DomainError("power map requires t >= 0")
        out = self.rho * np.power(arr, self.rho - 1.0)
        return out if isinstance(t, np.ndarray) else float(out)

    def inverse(self, x):
        """Inverse map, x -> t."""
        if self.kind == "identity":
            return x
        if self.kind == "logarithm":
            return np.exp(x) if isinstance(x, np.ndarray) else math.exp(x)
        if isinstance(x, np.ndarray):
            return np.power(x, 1.0 / self.rho)
        return math.pow(x, 1.0 / self.rho)


def psi_eval(psi: PsiMap, t: float) -> tuple[float, float]:
    """Return the pair ``(psi(t), psi'(t))``."""
    return psi.value(t), psi.deriv(t)


@dataclass(frozen=True)
class FracOrder:
    """Differentiation order ``alpha`` and interpolation type ``beta``.

    The induced exponent ``gamma = alpha + beta * (1 - alpha)`` governs the
    weight of the solution space; ``beta = 0`` and ``beta = 1`` recover the
    two classical one-parameter constructions.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not (0.0 <= self.beta <= 1.0):
            raise DomainError(f"beta must lie in [0, 1], got {self.beta!r}")

    @property
    def gamma(self) -> float:
        return self.alpha + self.beta * (1.0 - self.alpha)

    @property
    def weight(self) -> float:
        """Exponent ``1 - gamma`` of the weighted solution space."""
        return 1.0 - self.gamma


@dataclass(frozen=True)
class Mesh:
    """Graded mesh on ``[a, T]``, built in the transformed coordinate.

    ``psi_nodes[j] = psi(a) + (psi(T) - psi(a)) * (j/n)**grading``; the
    physical nodes are the pullbacks.  ``grading = 1`` is uniform in the
    transformed coordinate; larger gradings cluster nodes near ``a``.
    """

    psi: PsiMap
    a: float
    T: float
    n: int
    grading: float
    nodes: np.ndarray = field(repr=False)
    psi_nodes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"mesh needs n >= 1 intervals, got {self.n!r}")
        if not self.T > self.a:
            raise DomainError(f"mesh needs T > a, got a={self.a!r}, T={self.T!r}")
        if not (math.isfinite(self.grading) and self.grading >= 1.0):
            raise DomainError(f"grading must be >= 1, got {self.grading!r}")

    def same_as(self, other: "Mesh") -> bool:
        """True when both meshes share nodes (cheap identity-style check)."""
        return (
            self.psi == other.psi
            and self.a == other.a
            and self.T == other.T
            and self.n == other.n
            and self.grading == other.grading
        )


def build_mesh(psi: PsiMap, a: float, T: float, n: int, grading: float = 1.0) -> Mesh:
    """Construct a graded mesh of ``n`` intervals on ``[a, T]``.

    Endpoints are pinned exactly; interior nodes come from inverting the
    transformed-coordinate grading formula.
    """
    a = float(a)
    T = float(T)
    if psi.kind == "logarithm" and a <= 0.0:
        raise DomainError("logarithm map requires a > 0")
    if psi.kind == "power" and a < 0.0:
        raise DomainError("power map requires a >= 0")
    if not T > a:
        raise DomainError(f"build_mesh needs T > a, got a={a!r}, T={T!r}")
    if n < 1:
        raise DomainError(f"build_mesh needs n >= 1, got {n!r}")
    if not (math.isfinite(grading) and grading >= 1.0):
        raise DomainError(f"grading must be >= 1, got {grading!r}")
    xa = psi.value(a)
    xT = psi.value(T)
    frac = np.power(np.arange(n + 1, dtype=float) / n, grading)
    psi_nodes = xa + (xT - xa) * frac
    nodes = np.empty(n + 1, dtype=float)
    nodes[0] = a
    nodes[-1] = T
    if n > 1:
        nodes[1:-1] = psi.inverse(psi_nodes[1:-1])
    psi_nodes = psi_nodes.copy()
    psi_nodes[0] = xa
    psi_nodes[-1] = xT
    nodes.setflags(write=False)
    psi_nodes.setflags(write=False)
    return Mesh(psi=psi, a=a, T=T, n=n, grading=float(grading), nodes=nodes, psi_nodes=psi_nodes)


@dataclass(frozen=True)
class GridFunction:
    """Nodal values on a mesh, possibly stored in weighted form.

    ``weight_exp = 0`` means plain samples ``u(t_j)``.  A positive weight
    ``w`` means the stored numbers are ``(psi(t_j) - psi(a))**w * u(t_j)``,
    with the value at ``t = a`` interpreted as the one-sided limit.
    """

    mesh: Mesh
    values: np.ndarray = field(repr=False)
    weight_exp: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.mesh.n + 1,):
            raise ContractError(
                f"values shape {vals.shape} does not match mesh with "
                f"{self.mesh.n + 1} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ContractError("grid function values must all be finite")
        if not (0.0 <= self.weight_exp < 1.0):
            raise ContractError(
                f"weight_exp must lie in [0, 1), got {self.weight_exp!r}"
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.mesh, values, self.weight_exp)


def weighted_norm(u: GridFunction, order: FracOrder) -> float:
    """Sup norm of ``(psi(t) - psi(a))**(1-gamma) * u(t)`` over the mesh.

    Plain data (``weight_exp = 0``) is weighted on the fly; data already
    stored with exponent ``1 - gamma`` is read off directly.  With plain
    data and ``gamma < 1`` the node at ``t = a`` is excluded from the max,
    since the weight vanishes there.
    """
    w = order.weight
    if abs(u.weight_exp - w) <= 1e-12:
        return float(np.max(np.abs(u.values)))
    if u.weight_exp != 0.0:
        raise ContractError(
            f"weight_exp {u.weight_exp!r} matches neither 0 nor 1-gamma = {w!r}"
        )
    if w == 0.0:
        return float(np.max(np.abs(u.values)))
    dx = u.mesh.psi_nodes - u.mesh.psi_nodes[0]
    scaled = np.power(dx[1:], w) * np.abs(u.values[1:])
    return float(np.max(scaled))
