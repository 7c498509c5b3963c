"""Explicit component geometry: hyperellipse description functions and projections.

A structure is a union of slender components with straight skeletons and a
quadratically varying half-thickness.  Each component carries seven scalar
parameters ``(x0, y0, L, t1, t2, t3, theta)``; the level-set style field of
a component is positive inside it, zero on its boundary and negative outside,
and the structure field is the pointwise maximum over components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PARAMS_PER_COMPONENT = 7
DEFAULT_EXPONENT = 6

# Field names in flattening order.
COMPONENT_FIELDS = ("x0", "y0", "L", "t1", "t2", "t3", "theta")


class GeometryError(ValueError):
    """Invalid component or design-vector data."""


@dataclass
class Component:
    """One structural member: straight skeleton, quadratic thickness profile.

    ``x0, y0`` locate the skeleton midpoint, ``L`` is the half length,
    ``t1, t2, t3`` are the half thicknesses at the left end, middle and
    right end, and ``theta`` is the inclination in radians.
    """

    x0: float
    y0: float
    L: float
    t1: float
    t2: float
    t3: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x0, self.y0, self.L, self.t1, self.t2, self.t3, self.theta],
            dtype=float,
        )

    @classmethod
    def from_array(cls, arr) -> "Component":
        a = np.asarray(arr, dtype=float).ravel()
        if a.size != PARAMS_PER_COMPONENT:
            raise GeometryError(f"component needs 7 parameters, got {a.size}")
        return cls(*a.tolist())

    def min_thickness(self) -> float:
        """Minimum of the thickness profile over the skeleton interval."""
        candidates = [self.t1, self.t2, self.t3]
        a = (self.t1 + self.t3 - 2.0 * self.t2) / (2.0 * self.L**2)
        b = (self.t3 - self.t1) / (2.0 * self.L)
        if a != 0.0:
            x_vertex = -b / (2.0 * a)
            if -self.L < x_vertex < self.L:
                candidates.append(thickness_profile(x_vertex, self))
        return min(candidates)

    def validate(self) -> None:
        if not self.L > 0.0:
            raise GeometryError(f"half length must be positive, got {self.L}")
        for name in ("t1", "t2", "t3"):
            if not getattr(self, name) > 0.0:
                raise GeometryError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.min_thickness() > 0.0:
            raise GeometryError("thickness profile dips to zero inside the skeleton interval")


@dataclass
class DesignVector:
    """Ordered collection of components plus optional per-variable bounds.

    Flattening concatenates each component's ``(x0, y0, L, t1, t2, t3,
    theta)``; ``unflatten(flatten(d))`` reproduces ``d``.
    """

    components: list[Component]
    p: int = DEFAULT_EXPONENT
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.components)

    def flatten(self) -> np.ndarray:
        if not self.components:
            raise GeometryError("design vector has no components")
        return np.concatenate([c.as_array() for c in self.components])

    @classmethod
    def unflatten(cls, arr, p: int = DEFAULT_EXPONENT, lower=None, upper=None) -> "DesignVector":
        a = np.asarray(arr, dtype=float).ravel()
        if a.size == 0 or a.size % PARAMS_PER_COMPONENT != 0:
            raise GeometryError(f"flat design length must be a positive multiple of 7, got {a.size}")
        comps = [
            Component.from_array(a[i : i + PARAMS_PER_COMPONENT])
            for i in range(0, a.size, PARAMS_PER_COMPONENT)
        ]
        return cls(comps, p=p, lower=lower, upper=upper)

    def param_array(self) -> np.ndarray:
        """Components as an (n, 7) float array (the kernel input layout)."""
        return self.flatten().reshape(self.n, PARAMS_PER_COMPONENT)

    def validate(self) -> None:
        if not self.components:
            raise GeometryError("design vector has no components")
        if self.p < 2 or self.p % 2 != 0:
            raise GeometryError(f"exponent must be an even integer >= 2, got {self.p}")
        for c in self.components:
            c.validate()

    def to_text(self) -> str:
        lines = [f"mmc-design v1 n={self.n} p={self.p}"]
        for c in self.components:
            lines.append(" ".join(repr(v) for v in c.as_array().tolist()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DesignVector":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("mmc-design v1"):
            raise GeometryError("not a v1 design record")
        header = dict(tok.split("=") for tok in lines[0].split()[2:])
        n = int(header["n"])
        p = int(header["p"])
        if len(lines) - 1 != n:
            raise GeometryError(f"header promises {n} components, found {len(lines) - 1}")
        comps = [Component.from_array([float(tok) for tok in ln.split()]) for ln in lines[1:]]
        return cls(comps, p=p)


@dataclass
class DesignDomain:
    """Rectangular design domain, optionally with one rectangular cutout.

    The cutout, given as ``(x_lo, y_lo, x_hi, y_hi)``, removes the half-open
    region ``x in (x_lo, x_hi], y in (y_lo, y_hi]`` so an L-shaped domain can
    share edges with the bounding rectangle.
    """

    width: float
    height: float
    cutout: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        if not (self.width > 0.0 and self.height > 0.0):
            raise GeometryError("domain width and height must be positive")
        if self.cutout is not None:
            x_lo, y_lo, x_hi, y_hi = self.cutout
            inside = 0.0 <= x_lo < x_hi <= self.width and 0.0 <= y_lo < y_hi <= self.height
            if not inside:
                raise GeometryError("cutout must lie inside the bounding rectangle")
            if (x_hi - x_lo) * (y_hi - y_lo) >= self.width * self.height:
                raise GeometryError("cutout may not cover the whole domain")

    def active(self, x, y):
        """True where the point belongs to the active (material-eligible) region."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = (x >= 0.0) & (x <= self.width) & (y >= 0.0) & (y <= self.height)
        if self.cutout is not None:
            x_lo, y_lo, x_hi, y_hi = self.cutout
            in_cut = (x > x_lo) & (x <= x_hi) & (y > y_lo) & (y <= y_hi)
            inside &= ~in_cut
        return inside

    @property
    def area(self) -> float:
        a = self.width * self.height
        if self.cutout is not None:
            x_lo, y_lo, x_hi, y_hi = self.cutout
            a -= (x_hi - x_lo) * (y_hi - y_lo)
        return a


def parameter_bounds(domain: DesignDomain) -> tuple[np.ndarray, np.ndarray]:
    """Per-component box constraints used by the design optimizer.

    Centers roam the bounding rectangle, half lengths stay within
    ``[0.01, 0.8] * width``, half thicknesses within ``[0.01, 0.3] * height``
    and the inclination within ``[-pi, pi]``.
    """
    dw, dh = domain.width, domain.height
    lower = np.array([0.0, 0.0, 0.01 * dw, 0.01 * dh, 0.01 * dh, 0.01 * dh, -math.pi])
    upper = np.array([dw, dh, 0.8 * dw, 0.3 * dh, 0.3 * dh, 0.3 * dh, math.pi])
    return lower, upper


def design_bounds(domain: DesignDomain, n_components: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = parameter_bounds(domain)
    return np.tile(lo, n_components), np.tile(hi, n_components)


def local_coords(point: tuple[float, float], c: Component) -> tuple[float, float]:
    """Map a global point into the component frame (rotate by -theta about the center)."""
    dx = point[0] - c.x0
    dy = point[1] - c.y0
    ct = math.cos(c.theta)
    st = math.sin(c.theta)
    return (ct * dx + st * dy, -st * dx + ct * dy)


def thickness_profile(x_prime: float, c: Component) -> float:
    """Half thickness at skeleton coordinate ``x_prime``.

    The unique quadratic through ``(-L, t1)``, ``(0, t2)`` and ``(L, t3)``.
    """
    return (
        c.t2
        + (c.t3 - c.t1) / (2.0 * c.L) * x_prime
        + (c.t1 + c.t3 - 2.0 * c.t2) / (2.0 * c.L**2) * x_prime**2
    )


def phi_component(point: tuple[float, float], c: Component, p: int = DEFAULT_EXPONENT) -> float:
    """Component field: positive inside, zero on the boundary, negative outside.

    Hyperellipse form ``1 - (x'/L)^p - (y'/f(x'))^p`` with both terms raised
    to the even exponent ``p``.
    """
    xp, yp = local_coords(point, c)
    f = thickness_profile(xp, c)
    if abs(f) < 1e-12:
        # Degenerate profile: treat as a vanishing-thickness member.
        f = 1e-12
    return 1.0 - (xp / c.L) ** p - (yp / f) ** p


def phi_structure(point: tuple[float, float], d: DesignVector) -> float:
    """Structure field: max of the member fields (union of components)."""
    if not d.components:
        raise GeometryError("design vector has no components")
    return max(phi_component(point, c, d.p) for c in d.components)


def heaviside(x):
    """Exact material indicator: 0 for x <= 0, 1 otherwise."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0.0, 1.0, 0.0)
    return out if out.ndim else float(out)


def heaviside_smooth(x, eps: float, alpha: float):
    """C1 ramp from ``alpha`` (x <= -eps) to 1 (x >= eps) via a cubic.

    ``alpha`` is the small floor that keeps void elements from making the
    stiffness matrix singular.
    """
    if eps <= 0.0:
        raise GeometryError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=float)
    mid = 0.75 * (1.0 - alpha) * (x / eps - x**3 / (3.0 * eps**3)) + 0.5 * (1.0 + alpha)
    out = np.where(x <= -eps, alpha, np.where(x >= eps, 1.0, mid))
    return out if out.ndim else float(out)


def heaviside_smooth_deriv(x, eps: float, alpha: float):
    """Derivative of :func:`heaviside_smooth`: a parabola on (-eps, eps), 0 outside."""
    if eps <= 0.0:
        raise GeometryError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=float)
    inner = 0.75 * (1.0 - alpha) / eps * (1.0 - x**2 / eps**2)
    out = np.where(np.abs(x) < eps, inner, 0.0)
    return out if out.ndim else float(out)
