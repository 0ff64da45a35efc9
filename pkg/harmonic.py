"""
Harmonic measure from the origin for the disk and strip domains.

Both domains are carried onto the unit disk by explicit conformal maps that send the
origin to 0, where harmonic measure is normalized arc length.

Disk with centre c and radius R:
    w = (z - c) / R,  a = -c / R,  phi(w) = (w - a) / (1 - conj(a) w)

Strip bottom < Im z < top of width W:
    s = exp(pi (z - i bottom) / W)        (strip -> upper half-plane)
    s0 = exp(-i pi bottom / W)             (image of the origin)
    phi(s) = (s - s0) / (s - conj(s0))     (half-plane -> disk)

On the strip, x -> +inf on either line maps to angle 0; the top line covers
(0, 2*gamma) with theta decreasing in x, the bottom line covers (2*gamma, 2*pi) with
theta increasing in x, where gamma = -pi bottom / W.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from geometry import TWO_PI, DiskDomain, Domain, StripDomain

BOUNDARY_TOLERANCE = 1e-9


class HarmonicDomainError(ValueError):
    """Raised for points or parameters outside the valid range of a map."""


@dataclass(frozen=True)
class ConformalMap:
    domain: Domain
    center: complex = 0j
    radius: float = 1.0
    mobius_a: complex = 0j
    strip_bottom: float = 0.0
    strip_width: float = 1.0
    half_plane_s0: complex = 1j

    @property
    def kind(self) -> str:
        return self.domain.kind


def conformal_map(domain: Domain) -> ConformalMap:
    if isinstance(domain, DiskDomain):
        center = complex(domain.center_x, domain.center_y)
        return ConformalMap(
            domain=domain,
            center=center,
            radius=domain.radius,
            mobius_a=-center / domain.radius,
        )
    gamma = -math.pi * domain.bottom / domain.width
    return ConformalMap(
        domain=domain,
        strip_bottom=domain.bottom,
        strip_width=domain.width,
        half_plane_s0=cmath.exp(1j * gamma),
    )


def _strip_gamma(domain: StripDomain) -> float:
    return -math.pi * domain.bottom / domain.width


def _in_closure(domain: Domain, z: complex) -> bool:
    if isinstance(domain, DiskDomain):
        distance = abs(z - complex(domain.center_x, domain.center_y))
        return distance <= domain.radius * (1.0 + BOUNDARY_TOLERANCE)
    slack = BOUNDARY_TOLERANCE * domain.width
    return domain.bottom - slack <= z.imag <= domain.top + slack


def map_point(m: ConformalMap, z: complex | tuple[float, float]) -> complex:
    """Image of a point of the closed domain in the closed unit disk."""
    if isinstance(z, tuple):
        z = complex(z[0], z[1])
    z = complex(z)
    if not _in_closure(m.domain, z):
        raise HarmonicDomainError(f"{z} is outside the closure of {m.domain}")

    if m.kind == "disk":
        w = (z - m.center) / m.radius
        return (w - m.mobius_a) / (1.0 - m.mobius_a.conjugate() * w)

    s0 = m.half_plane_s0
    u = math.pi * (z - 1j * m.strip_bottom) / m.strip_width
    if u.real > 0.0:
        # divide through by s so large x does not overflow
        q = cmath.exp(-u)
        return (1.0 - s0 * q) / (1.0 - s0.conjugate() * q)
    s = cmath.exp(u)
    return (s - s0) / (s - s0.conjugate())


def strip_parameter(domain: StripDomain, side: str, x: float) -> float:
    """Conformal-image angle in [0, 2*pi) of the boundary point (x, top|bottom)."""
    theta = strip_parameter_many(domain, np.array([side == "top"]), np.array([float(x)]))
    return float(theta[0])


def strip_parameter_many(domain: StripDomain, on_top: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Vectorized strip boundary parameter.

    A boundary point maps to the real value sigma = +/- exp(pi x / W) of the half-plane
    and then to angle 2*pi - 2*atan2(sin gamma, sigma - cos gamma); for x > 0 both atan2
    arguments are scaled by exp(-pi x / W) to stay finite.
    """

    gamma = _strip_gamma(domain)
    sin_g, cos_g = math.sin(gamma), math.cos(gamma)
    u = math.pi * np.asarray(x, dtype=float) / domain.width
    sign = np.where(np.asarray(on_top, dtype=bool), -1.0, 1.0)
    decay = np.exp(-np.abs(u))

    positive = u > 0.0
    numerator = np.where(positive, sin_g * decay, sin_g)
    denominator = np.where(positive, sign - cos_g * decay, sign * decay - cos_g)
    theta = TWO_PI - 2.0 * np.arctan2(numerator, denominator)
    return np.where(theta >= TWO_PI, 0.0, theta)


def boundary_point_at(domain: Domain, theta: float) -> tuple[tuple[float, float], str]:
    """Inverse of the boundary parametrization: (point, side) for a parameter value."""
    if not 0.0 <= theta < TWO_PI:
        raise HarmonicDomainError(f"theta={theta} is outside [0, 2*pi)")
    if isinstance(domain, DiskDomain):
        return (
            (domain.center_x + domain.radius * math.cos(theta), domain.center_y + domain.radius * math.sin(theta)),
            "circle",
        )

    gamma = _strip_gamma(domain)
    alpha = math.pi - 0.5 * theta
    if theta == 0.0 or abs(math.sin(alpha)) == 0.0:
        raise HarmonicDomainError("theta=0 is the point at infinity of the strip")
    sigma = math.cos(gamma) + math.sin(gamma) * math.cos(alpha) / math.sin(alpha)
    if sigma == 0.0:
        raise HarmonicDomainError("theta corresponds to the point at minus infinity of the strip")
    x = domain.width / math.pi * math.log(abs(sigma))
    if sigma > 0.0:
        return (x, domain.bottom), "bottom"
    return (x, domain.top), "top"


def side_measure(domain: StripDomain) -> dict[str, float]:
    """Harmonic measure of each strip line seen from the origin."""
    top = -domain.bottom / domain.width
    return {"top": top, "bottom": 1.0 - top}


def harmonic_cdf(domain: Domain, theta):
    """
    H(theta): harmonic measure of the boundary arc with parameter in [0, theta].

    Accepts a scalar or an array. For the disk the image angle is
    psi(t) = t + 2 arg(1 - a exp(-i t)), where the arg stays in (-pi/2, pi/2) because
    |a| < 1, so no branch bookkeeping is needed. The strip is parametrized by the image
    angle itself and H is uniform.
    """

    values = np.asarray(theta, dtype=float)
    if np.any(values < 0.0) or np.any(values > TWO_PI) or np.any(np.isnan(values)):
        raise HarmonicDomainError("theta must lie in [0, 2*pi]")

    if isinstance(domain, StripDomain):
        cdf = values / TWO_PI
    else:
        a = -complex(domain.center_x, domain.center_y) / domain.radius
        psi = values + 2.0 * np.angle(1.0 - a * np.exp(-1j * values))
        psi0 = 2.0 * np.angle(1.0 - a)
        cdf = np.clip((psi - psi0) / TWO_PI, 0.0, 1.0)
        cdf = np.where(values == 0.0, 0.0, cdf)
        cdf = np.where(values == TWO_PI, 1.0, cdf)

    if np.ndim(theta) == 0:
        return float(cdf)
    return cdf


def harmonic_density(domain: DiskDomain, theta):
    """Poisson-kernel density dH/dtheta for the disk parameter."""
    a = -complex(domain.center_x, domain.center_y) / domain.radius
    values = np.asarray(theta, dtype=float)
    r2 = abs(a) ** 2
    return (1.0 - r2) / np.abs(np.exp(1j * values) - a) ** 2 / TWO_PI
