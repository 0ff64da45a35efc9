"""
Continuum domains, the rotated lattice embedding, and exit-point projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Raised for invalid domains or points that cannot be projected."""


@dataclass(frozen=True)
class DiskDomain:
    center_x: float
    center_y: float
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise GeometryError(f"Disk radius must be positive, got {self.radius}")
        if math.hypot(self.center_x, self.center_y) >= self.radius:
            raise GeometryError("Disk must contain the origin strictly inside")

    @property
    def kind(self) -> str:
        return "disk"


@dataclass(frozen=True)
class StripDomain:
    top: float
    bottom: float

    def __post_init__(self) -> None:
        if not self.bottom < 0.0 < self.top:
            raise GeometryError(f"Strip needs bottom < 0 < top, got bottom={self.bottom}, top={self.top}")

    @property
    def kind(self) -> str:
        return "strip"

    @property
    def width(self) -> float:
        return self.top - self.bottom


Domain = Union[DiskDomain, StripDomain]


@dataclass(frozen=True)
class LatticeEmbedding:
    """z = spacing * R(rotation) * (i, j) for integer sites (i, j)."""

    spacing: float
    rotation: float = 0.0
    _cos: float = field(init=False, repr=False, compare=False)
    _sin: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.spacing > 0:
            raise GeometryError(f"Lattice spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "_cos", math.cos(self.rotation))
        object.__setattr__(self, "_sin", math.sin(self.rotation))

    def to_plane(self, i: int, j: int) -> tuple[float, float]:
        return (
            self.spacing * (self._cos * i - self._sin * j),
            self.spacing * (self._sin * i + self._cos * j),
        )


@dataclass(frozen=True)
class ExitRecord:
    """
    Where a walk left its domain.

    side is "circle" for the disk and "top"/"bottom" for the strip; together with
    boundary_point it keeps the raw location so any other boundary parameter can be
    rebuilt from it.
    """

    outside_point: tuple[float, float]
    boundary_point: tuple[float, float]
    theta: float
    side: str
    steps: int = 0


def domain_to_dict(domain: Domain) -> dict:
    if isinstance(domain, DiskDomain):
        return {"kind": "disk", "center_x": domain.center_x, "center_y": domain.center_y, "radius": domain.radius}
    return {"kind": "strip", "top": domain.top, "bottom": domain.bottom}


def domain_from_dict(values: dict) -> Domain:
    kind = str(values.get("kind", "")).lower()
    try:
        if kind == "disk":
            return DiskDomain(float(values["center_x"]), float(values["center_y"]), float(values["radius"]))
        if kind == "strip":
            return StripDomain(float(values["top"]), float(values["bottom"]))
    except KeyError as exc:
        raise GeometryError(f"{kind} domain is missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, GeometryError):
            raise
        raise GeometryError(f"Domain fields must be numbers: {exc}") from exc
    raise GeometryError(f"Unknown domain kind {values.get('kind')!r}; expected 'disk' or 'strip'")


def domain_label(domain: Domain) -> str:
    if isinstance(domain, DiskDomain):
        return f"disk(c=({domain.center_x:g},{domain.center_y:g}),r={domain.radius:g})"
    return f"strip(top={domain.top:g},bottom={domain.bottom:g})"


def wrap_angle(angle: float) -> float:
    """Reduce to [0, 2*pi); guards the rounding case where the modulo lands on 2*pi."""
    wrapped = angle % TWO_PI
    if wrapped >= TWO_PI:
        return 0.0
    return wrapped


def contains(domain: Domain, point: tuple[float, float]) -> bool:
    """Strict interior test; boundary points are outside."""
    x, y = point
    if isinstance(domain, DiskDomain):
        dx = x - domain.center_x
        dy = y - domain.center_y
        return dx * dx + dy * dy < domain.radius * domain.radius
    return domain.bottom < y < domain.top


def contains_many(domain: Domain, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized form of contains for arrays of coordinates."""
    if isinstance(domain, DiskDomain):
        dx = x - domain.center_x
        dy = y - domain.center_y
        return dx * dx + dy * dy < domain.radius * domain.radius
    return (y > domain.bottom) & (y < domain.top)


def lattice_to_plane(embedding: LatticeEmbedding, site: tuple[int, int]) -> tuple[float, float]:
    return embedding.to_plane(site[0], site[1])


def origin_clearance(domain: Domain) -> float:
    """Distance from the origin to the boundary."""
    if isinstance(domain, DiskDomain):
        return domain.radius - math.hypot(domain.center_x, domain.center_y)
    return min(domain.top, -domain.bottom)


def is_admissible_spacing(domain: Domain, spacing: float) -> bool:
    """All four first-step neighbours stay inside the domain for every rotation."""
    return 0.0 < spacing < origin_clearance(domain)


def scaled_to_lattice(domain: Domain, spacing: float) -> Domain:
    """The same domain expressed in lattice units (divided by the spacing)."""
    if isinstance(domain, DiskDomain):
        return DiskDomain(domain.center_x / spacing, domain.center_y / spacing, domain.radius / spacing)
    return StripDomain(domain.top / spacing, domain.bottom / spacing)


def sample_rotation(u: float) -> float:
    return TWO_PI * u


def project(domain: Domain, point: tuple[float, float]) -> tuple[tuple[float, float], float, str]:
    """
    Orthogonal projection of an exit point onto the boundary.

    Returns (boundary_point, theta, side). The disk parameter is the angle about the
    disk centre; the strip parameter is the conformal-image angle of the boundary point.
    """

    if contains(domain, point):
        raise GeometryError(f"Point {point} lies inside the domain and has no exit projection")

    x, y = point
    if isinstance(domain, DiskDomain):
        dx = x - domain.center_x
        dy = y - domain.center_y
        distance = math.hypot(dx, dy)
        if distance == 0.0:
            raise GeometryError("Cannot project the disk centre")
        boundary = (
            domain.center_x + domain.radius * dx / distance,
            domain.center_y + domain.radius * dy / distance,
        )
        return boundary, wrap_angle(math.atan2(dy, dx)), "circle"

    from harmonic import strip_parameter

    side = "top" if y >= 0.5 * (domain.top + domain.bottom) else "bottom"
    boundary = (x, domain.top if side == "top" else domain.bottom)
    return boundary, strip_parameter(domain, side, x), side


def project_many(domain: Domain, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized project returning (theta, side) arrays for points outside the domain."""
    if isinstance(domain, DiskDomain):
        theta = np.arctan2(y - domain.center_y, x - domain.center_x) % TWO_PI
        theta = np.where(theta >= TWO_PI, 0.0, theta)
        return theta, np.full(theta.shape, "circle", dtype=object)

    from harmonic import strip_parameter_many

    on_top = y >= 0.5 * (domain.top + domain.bottom)
    theta = strip_parameter_many(domain, on_top, x)
    return theta, np.where(on_top, "top", "bottom").astype(object)


def exit_record(domain: Domain, outside_point: tuple[float, float], steps: int = 0) -> ExitRecord:
    boundary, theta, side = project(domain, outside_point)
    return ExitRecord(
        outside_point=outside_point,
        boundary_point=boundary,
        theta=theta,
        side=side,
        steps=steps,
    )
