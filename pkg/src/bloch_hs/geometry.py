"""Reference cells, two-phase coefficient fields and closed-form references.

Four cell families are supported, all in two dimensions:

* ``DiskInclusion``: core disk of radius ``R`` inside the unit disk.
* ``LaminateCell``: slab ``|y_i| <= a`` inside the square ``[-1, 1]^2``.
* ``ConfocalEllipse``: confocal core/coating ellipses ``rho <= rho1`` and
  ``rho <= rho2`` with ``sum_j y_j^2 / (rho + m_j) = 1``.
* ``PeriodicSquare``: unit square ``[0, 1]^2`` with a centered disk or slab.

Points on an interface belong to the core (closed core region).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ArgumentError, DomainError

CORE = 1
COATING = 2

_TOL = 1e-12


@dataclass(frozen=True)
class MaterialBounds:
    """Ellipticity bounds ``alpha |xi|^2 <= A xi . xi`` and ``|A xi| <= beta |xi|``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta >= self.alpha):
            raise ArgumentError(f"need 0 < alpha <= beta, got {self.alpha}, {self.beta}")


@dataclass(frozen=True)
class DiskInclusion:
    """Core disk ``|y| <= R`` in the unit disk."""

    R: float
    kind = "disk"

    def __post_init__(self):
        if not 0.0 < self.R < 1.0:
            raise ArgumentError(f"core radius must lie in (0, 1), got {self.R}")

    @property
    def area(self) -> float:
        return math.pi

    @property
    def theta(self) -> float:
        return self.R ** 2

    def inside(self, y: np.ndarray) -> np.ndarray:
        return np.hypot(y[:, 0], y[:, 1]) <= 1.0 + _TOL

    def core(self, y: np.ndarray) -> np.ndarray:
        return np.hypot(y[:, 0], y[:, 1]) <= self.R + _TOL

    def params(self) -> dict:
        return {"R": self.R}


@dataclass(frozen=True)
class LaminateCell:
    """Slab ``|y . e_axis| <= a`` in ``S = [-1, 1]^2``; ``axis`` is 1-based."""

    a: float
    axis: int = 1
    kind = "laminate"

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ArgumentError(f"slab half-width must lie in (0, 1), got {self.a}")
        if self.axis not in (1, 2):
            raise ArgumentError(f"axis must be 1 or 2, got {self.axis}")

    @property
    def area(self) -> float:
        return 4.0

    @property
    def theta(self) -> float:
        return self.a

    def inside(self, y: np.ndarray) -> np.ndarray:
        return np.all(np.abs(y) <= 1.0 + _TOL, axis=1)

    def core(self, y: np.ndarray) -> np.ndarray:
        return np.abs(y[:, self.axis - 1]) <= self.a + _TOL

    def params(self) -> dict:
        return {"a": self.a, "axis": self.axis}


@dataclass(frozen=True)
class ConfocalEllipse:
    """Confocal ellipses ``sum_j y_j^2 / (rho + m_j) = 1`` at ``rho1 < rho2``."""

    rho1: float
    rho2: float
    m: tuple = (0.0, 0.0)
    kind = "ellipse"

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(float(v) for v in self.m))
        if len(self.m) != 2:
            raise ArgumentError("two semi-axis offsets are required")
        if not self.rho1 < self.rho2:
            raise ArgumentError("need rho1 < rho2")
        if not self.rho1 + min(self.m) > 0:
            raise ArgumentError("core ellipse is degenerate (rho1 + min m <= 0)")

    def semi_axes(self, rho: float) -> np.ndarray:
        return np.sqrt(rho + np.asarray(self.m))

    @property
    def area(self) -> float:
        return math.pi * float(np.prod(self.semi_axes(self.rho2)))

    @property
    def theta(self) -> float:
        return float(np.prod(self.semi_axes(self.rho1) / self.semi_axes(self.rho2)))

    def _level(self, y: np.ndarray, rho: float) -> np.ndarray:
        s = self.semi_axes(rho)
        return (y[:, 0] / s[0]) ** 2 + (y[:, 1] / s[1]) ** 2

    def inside(self, y: np.ndarray) -> np.ndarray:
        return self._level(y, self.rho2) <= 1.0 + 1e-11

    def core(self, y: np.ndarray) -> np.ndarray:
        # rho(y) <= rho1 iff the level function at rho1 is <= 1 (it decreases in rho)
        return self._level(y, self.rho1) <= 1.0 + 1e-11

    def params(self) -> dict:
        return {"rho1": self.rho1, "rho2": self.rho2, "m": list(self.m)}


@dataclass(frozen=True)
class PeriodicSquare:
    """Unit square ``[0, 1]^2`` with a centered disk or slab inclusion.

    Parameters
    ----------
    shape : {"disk", "slab"}
        Inclusion shape.
    size : float
        Disk radius or slab half-width, in (0, 0.5).
    axis : int
        Slab normal direction (1-based), ignored for disks.
    """

    shape: str = "disk"
    size: float = 0.25
    axis: int = 1
    kind = "periodic"

    def __post_init__(self):
        if self.shape not in ("disk", "slab"):
            raise ArgumentError(f"unknown inclusion shape {self.shape!r}")
        if not 0.0 < self.size < 0.5:
            raise ArgumentError(f"inclusion size must lie in (0, 0.5), got {self.size}")
        if self.axis not in (1, 2):
            raise ArgumentError(f"axis must be 1 or 2, got {self.axis}")

    @property
    def area(self) -> float:
        return 1.0

    @property
    def theta(self) -> float:
        if self.shape == "disk":
            return math.pi * self.size ** 2
        return 2.0 * self.size

    def inside(self, y: np.ndarray) -> np.ndarray:
        return np.all((y >= -_TOL) & (y <= 1.0 + _TOL), axis=1)

    def core(self, y: np.ndarray) -> np.ndarray:
        z = y - 0.5
        if self.shape == "disk":
            return np.hypot(z[:, 0], z[:, 1]) <= self.size + _TOL
        return np.abs(z[:, self.axis - 1]) <= self.size + _TOL

    def params(self) -> dict:
        return {"shape": self.shape, "size": self.size, "axis": self.axis}


CellGeometry = Union[DiskInclusion, LaminateCell, ConfocalEllipse, PeriodicSquare]

_KINDS = {cls.kind: cls for cls in (DiskInclusion, LaminateCell, ConfocalEllipse, PeriodicSquare)}


def _as_matrix(value) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(2)
    if a.shape != (2, 2) or not np.allclose(a, a.T, rtol=0, atol=1e-14):
        raise ArgumentError("phase value must be a scalar or a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(a)[0] <= 0:
        raise ArgumentError("phase matrix must be positive definite")
    return a


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise-constant coefficient on a reference cell.

    Parameters
    ----------
    geometry : CellGeometry
        Reference cell.
    core, coating : array_like
        Phase values, scalars (isotropic) or symmetric positive definite 2x2 matrices.
    """

    geometry: CellGeometry
    core: np.ndarray
    coating: np.ndarray
    bounds: MaterialBounds = field(init=False)

    def __post_init__(self):
        core = _as_matrix(self.core)
        coat = _as_matrix(self.coating)
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "coating", coat)
        ev = np.concatenate([np.linalg.eigvalsh(core), np.linalg.eigvalsh(coat)])
        object.__setattr__(self, "bounds", MaterialBounds(float(ev.min()), float(ev.max())))

    @classmethod
    def two_phase(cls, geometry: CellGeometry, alpha: float, beta: float) -> "CoefficientField":
        """Isotropic field with ``alpha I`` in the core and ``beta I`` in the coating."""
        return cls(geometry, alpha, beta)

    @property
    def isotropic(self) -> bool:
        return all(np.allclose(a, a[0, 0] * np.eye(2), rtol=0, atol=0) for a in (self.core, self.coating))

    @property
    def alpha(self) -> float:
        """Scalar core value (isotropic fields)."""
        return float(self.core[0, 0])

    @property
    def beta(self) -> float:
        """Scalar coating value (isotropic fields)."""
        return float(self.coating[0, 0])

    def phase(self, region: int) -> np.ndarray:
        return self.core if region == CORE else self.coating

    def region(self, y) -> np.ndarray:
        """Region labels (CORE or COATING) of points ``y`` with shape ``(n, 2)``."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if not np.all(self.geometry.inside(y)):
            raise DomainError("point outside the reference cell")
        return np.where(self.geometry.core(y), CORE, COATING)

    def evaluate_many(self, y) -> np.ndarray:
        """Coefficient matrices at points ``y`` with shape ``(n, 2)``; returns ``(n, 2, 2)``."""
        core = self.region(y) == CORE
        return np.where(core[:, None, None], self.core, self.coating)

    def to_dict(self) -> dict:
        def enc(a):
            return float(a[0, 0]) if np.allclose(a, a[0, 0] * np.eye(2), rtol=0, atol=0) else a.tolist()

        return {"kind": self.geometry.kind, "params": self.geometry.params(),
                "alpha": enc(self.core), "beta": enc(self.coating)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "CoefficientField":
        try:
            geom_cls = _KINDS[doc["kind"]]
        except KeyError as exc:
            raise ArgumentError(f"unknown cell kind {doc.get('kind')!r}") from exc
        params = dict(doc.get("params", {}))
        if geom_cls is ConfocalEllipse and "m" in params:
            params["m"] = tuple(params["m"])
        return cls(geom_cls(**params), doc["alpha"], doc["beta"])

    @classmethod
    def from_json(cls, text: str) -> "CoefficientField":
        return cls.from_dict(json.loads(text))


def evaluate_coefficient(field: CoefficientField, y) -> np.ndarray:
    """Coefficient matrix at a single point of the closed reference cell."""
    return field.evaluate_many(np.asarray(y, dtype=float).reshape(1, 2))[0]


def confocal_rho(y, m, maxiter: int = 100) -> float:
    """Confocal parameter ``rho`` with ``sum_j y_j^2 / (rho + m_j) = 1``.

    Safeguarded Newton iteration started at ``|y|^2 - min_j m_j``. Points
    inside the degenerate focal set return the lower limit ``-min_j m_j``.
    """
    y = np.asarray(y, dtype=float)
    m = np.asarray(m, dtype=float)
    lo = -m.min()

    def f(r):
        return float(np.sum(y ** 2 / (r + m))) - 1.0

    def df(r):
        return -float(np.sum(y ** 2 / (r + m) ** 2))

    eps = 1e-14 * max(1.0, abs(lo))
    if f(lo + eps) <= 0.0:
        return lo
    hi = max(float(y @ y) - m.min(), lo + 1.0)
    while f(hi) > 0:
        hi = lo + 2.0 * (hi - lo)
    a, b = lo, hi
    r = min(max(float(y @ y) - m.min(), lo + eps), hi)
    for _ in range(maxiter):
        fr = f(r)
        if fr > 0:
            a = r
        else:
            b = r
        step = fr / df(r)
        rn = r - step
        if not (a < rn < b):
            rn = 0.5 * (a + b)
        if abs(rn - r) <= 1e-15 * max(1.0, abs(rn)):
            return rn
        r = rn
    return r


def _check_theta(theta):
    if not 0.0 < theta < 1.0:
        raise ArgumentError(f"volume fraction must lie in (0, 1), got {theta}")


def hs_spherical_gamma(alpha: float, beta: float, theta: float, N: int = 2) -> float:
    """Effective conductivity of the coated sphere assemblage.

    Solves ``(g - b)/(g + (N-1) b) = theta (a - b)/(a + (N-1) b)`` for ``g``.
    """
    _check_theta(theta)
    if alpha <= 0 or beta <= 0:
        raise ArgumentError("phase values must be positive")
    if N < 2:
        raise ArgumentError("dimension must be at least 2")
    k = theta * (alpha - beta) / (alpha + (N - 1) * beta)
    return beta * (1.0 + (N - 1) * k) / (1.0 - k)


def laminate_means(alpha: float, beta: float, theta: float) -> tuple[float, float]:
    """Harmonic and arithmetic means with weight ``theta`` on ``alpha``."""
    _check_theta(theta)
    if alpha <= 0 or beta <= 0:
        raise ArgumentError("phase values must be positive")
    harmonic = alpha * beta / (theta * beta + (1.0 - theta) * alpha)
    arithmetic = theta * alpha + (1.0 - theta) * beta
    return harmonic, arithmetic


def hs_elliptical_rhs(alpha: float, beta: float, theta: float, N: int = 2) -> float:
    """Right-hand side of the confocal-ellipsoid sum relation."""
    _check_theta(theta)
    if alpha == beta:
        raise ArgumentError("relation undefined for alpha == beta")
    return ((1.0 - theta) * alpha + (N + theta - 1.0) * beta) / (theta * beta * (beta - alpha))


def hs_elliptical_residual(gamma_diag, alpha: float, beta: float, theta: float, N: int = 2) -> float:
    """``sum_j 1/(beta - gamma_jj)`` minus the sum-relation right-hand side."""
    g = np.asarray(gamma_diag, dtype=float)
    if g.shape != (N,):
        raise ArgumentError(f"expected {N} diagonal entries")
    if np.any(g == beta):
        raise ArgumentError("gamma_jj == beta makes the relation singular")
    rhs = hs_elliptical_rhs(alpha, beta, theta, N)
    return float(np.sum(1.0 / (beta - g))) - rhs
