"""
Analytic chart geometry for compact surfaces of revolution with boundary.

Every supported surface is covered by one orthogonal chart (s, φ) with
metric ds² + f(s)² dφ², where s is the non-periodic coordinate and φ the
periodic one. Metric, Christoffel symbols, Ricci tensor and boundary data are
evaluated from closed forms; nothing is differenced.
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from config.config import (
    DEFAULT_HEIGHT,
    DEFAULT_RADIUS,
    DEFAULT_RESOLUTION,
    DEFAULT_THETA_MAX,
    MIN_RESOLUTION,
)
from utils.error_utils import GeometryError


KINDS = ("disk", "cap", "cylinder", "custom")


@dataclass(frozen=True)
class ChartProfile:
    """
    Warping function of the chart metric ds² + f(s)² dφ².

    `height` / `dheight` describe the embedding z(s) of the meridian in R³;
    they are optional for custom charts.
    """
    name: str
    s0: float
    s1: float
    pole: bool
    f: Callable
    df: Callable
    d2f: Callable
    height: Optional[Callable] = None
    dheight: Optional[Callable] = None

    @property
    def embedded(self):
        return self.height is not None and self.dheight is not None


def disk_profile(radius):
    """Flat disk of the given radius in polar coordinates (r, φ)."""
    return ChartProfile(
        name="disk",
        s0=0.0,
        s1=float(radius),
        pole=True,
        f=lambda s: np.asarray(s, dtype=float),
        df=lambda s: np.ones_like(np.asarray(s, dtype=float)),
        d2f=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        height=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        dheight=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
    )


def cap_profile(theta_max):
    """Unit-sphere cap {θ < θ_max} in colatitude / longitude."""
    return ChartProfile(
        name="cap",
        s0=0.0,
        s1=float(theta_max),
        pole=True,
        f=np.sin,
        df=np.cos,
        d2f=lambda s: -np.sin(s),
        height=np.cos,
        dheight=lambda s: -np.sin(s),
    )


def cylinder_profile(radius, height):
    """Finite cylinder of radius a and height h, s = z."""
    a = float(radius)
    return ChartProfile(
        name="cylinder",
        s0=0.0,
        s1=float(height),
        pole=False,
        f=lambda s: np.full_like(np.asarray(s, dtype=float), a),
        df=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        d2f=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        height=lambda s: np.asarray(s, dtype=float),
        dheight=lambda s: np.ones_like(np.asarray(s, dtype=float)),
    )


@dataclass(frozen=True)
class GeometrySpec:
    """Which surface to build and at what resolution."""
    kind: str
    n1: int = DEFAULT_RESOLUTION
    n2: int = DEFAULT_RESOLUTION
    radius: float = DEFAULT_RADIUS
    theta_max: float = DEFAULT_THETA_MAX
    height: float = DEFAULT_HEIGHT
    profile: Optional[ChartProfile] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeometryError(f"Unknown geometry kind '{self.kind}' (expected one of {', '.join(KINDS)})")
        for name in ("n1", "n2"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise GeometryError(f"{name} must be an integer, got {value!r}")
            if value < MIN_RESOLUTION:
                raise GeometryError(f"{name} must be at least {MIN_RESOLUTION}, got {value}")
        if self.n2 % 2:
            raise GeometryError(f"n2 must be even, got {self.n2}")
        for name in ("radius", "theta_max", "height"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise GeometryError(f"{name} must be positive and finite, got {value}")
        if self.kind == "cap" and self.theta_max >= math.pi:
            raise GeometryError(f"theta_max must be below pi, got {self.theta_max}")
        if self.kind == "custom":
            if self.profile is None:
                raise GeometryError("A custom geometry needs a chart profile")
            if not self.profile.s1 > self.profile.s0:
                raise GeometryError("Custom chart interval must satisfy s1 > s0")

    def chart_profile(self):
        if self.kind == "disk":
            return disk_profile(self.radius)
        if self.kind == "cap":
            return cap_profile(self.theta_max)
        if self.kind == "cylinder":
            return cylinder_profile(self.radius, self.height)
        return self.profile

    def with_resolution(self, n1, n2=None):
        """Same surface at another resolution."""
        return GeometrySpec(
            kind=self.kind,
            n1=n1,
            n2=n1 if n2 is None else n2,
            radius=self.radius,
            theta_max=self.theta_max,
            height=self.height,
            profile=self.profile,
        )


@dataclass(frozen=True)
class MetricSample:
    """Metric quantities at a set of s values; component axes come first."""
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det_g: np.ndarray
    christoffel: np.ndarray
    ricci: np.ndarray
    gauss: np.ndarray


@dataclass(frozen=True, eq=False)
class BoundarySegment:
    """
    One boundary circle s = const.

    `side` is +1 at s1 and -1 at s0, `face` the matching s-face index of the
    staggered grid. `kappa` is the geodesic curvature of the circle with
    respect to the outward normal; `weights` integrate against dσ_g.
    """
    name: str
    side: int
    s: float
    face: int
    normal: np.ndarray
    kappa: np.ndarray
    weights: np.ndarray
    g: np.ndarray


@dataclass(frozen=True, eq=False)
class ChartGeometry:
    """Chart data sampled at cell centers (s_i, φ_j)."""
    spec: GeometrySpec
    profile: ChartProfile
    n1: int
    n2: int
    ds: float
    dphi: float
    s: np.ndarray
    phi: np.ndarray
    coords: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det_g: np.ndarray
    christoffel: np.ndarray
    ricci: np.ndarray
    gauss: np.ndarray
    f: np.ndarray
    df: np.ndarray
    boundary: tuple

    @property
    def shape(self):
        return (self.n1, self.n2)

    @property
    def has_pole(self):
        return self.profile.pole

    @property
    def cell_area(self):
        return self.ds * self.dphi

    @property
    def volume_weights(self):
        """Quadrature weights for ∫_M · dμ_g at cell centers."""
        return self.sqrt_det_g * self.cell_area


def metric_tensors(profile, s):
    """
    Evaluate the analytic metric data of a profile.

    Args:
        profile (ChartProfile): Chart warping function
        s (float or ndarray): Non-periodic coordinate values

    Returns:
        MetricSample: g, g⁻¹, √det g, Γ^i_jk (index order [i, j, k]),
            Ric_ij and the Gauss curvature, each with shape (..., *s.shape)
    """
    s = np.asarray(s, dtype=float)
    f = np.asarray(profile.f(s), dtype=float)
    df = np.asarray(profile.df(s), dtype=float)
    d2f = np.asarray(profile.d2f(s), dtype=float)
    zero = np.zeros_like(s)
    one = np.ones_like(s)

    big_g = f * f
    g = np.array([[one, zero], [zero, big_g]])
    g_inv = np.array([[one, zero], [zero, 1.0 / big_g]])

    christoffel = np.zeros((2, 2, 2) + s.shape)
    christoffel[0, 1, 1] = -f * df
    christoffel[1, 0, 1] = df / f
    christoffel[1, 1, 0] = df / f

    gauss = -d2f / f
    ricci = gauss * g
    return MetricSample(g=g, g_inv=g_inv, sqrt_det_g=f, christoffel=christoffel, ricci=ricci, gauss=gauss)


def _freeze(array):
    array = np.ascontiguousarray(array, dtype=float)
    array.setflags(write=False)
    return array


def _boundary_segment(profile, n2, dphi, side, s_b, face):
    f_b = float(profile.f(np.array(s_b)))
    df_b = float(profile.df(np.array(s_b)))
    if not f_b > 0.0:
        raise GeometryError(f"Boundary circle at s={s_b} is degenerate (f={f_b})")
    normal = np.zeros((2, n2))
    normal[0] = side
    g = np.zeros((2, 2, n2))
    g[0, 0] = 1.0
    g[1, 1] = f_b * f_b
    return BoundarySegment(
        name="outer" if side > 0 else "inner",
        side=side,
        s=float(s_b),
        face=face,
        normal=_freeze(normal),
        kappa=_freeze(np.full(n2, side * df_b / f_b)),
        weights=_freeze(np.full(n2, f_b * dphi)),
        g=_freeze(g),
    )


def build_geometry(spec):
    """
    Build the chart geometry described by a GeometrySpec.

    The s-grid is cell-centered, s_i = s0 + (i + ½)Δs, so no node sits on a
    pole or on a boundary circle.

    Args:
        spec (GeometrySpec): Surface and resolution

    Returns:
        ChartGeometry: Immutable geometry sampled at cell centers

    Raises:
        GeometryError: If the chart is degenerate somewhere on the grid
    """
    profile = spec.chart_profile()
    n1, n2 = spec.n1, spec.n2
    ds = (profile.s1 - profile.s0) / n1
    dphi = 2.0 * math.pi / n2
    s = profile.s0 + (np.arange(n1) + 0.5) * ds
    phi = np.arange(n2) * dphi

    s_grid, phi_grid = np.meshgrid(s, phi, indexing="ij")
    sample = metric_tensors(profile, s_grid)
    if not np.all(np.isfinite(sample.sqrt_det_g)) or np.any(sample.sqrt_det_g <= 0.0):
        raise GeometryError(f"Chart '{profile.name}' has a non-positive metric inside the grid")

    boundary = [_boundary_segment(profile, n2, dphi, +1, profile.s1, n1)]
    if not profile.pole:
        boundary.append(_boundary_segment(profile, n2, dphi, -1, profile.s0, 0))

    return ChartGeometry(
        spec=spec,
        profile=profile,
        n1=n1,
        n2=n2,
        ds=ds,
        dphi=dphi,
        s=_freeze(s),
        phi=_freeze(phi),
        coords=_freeze(np.array([s_grid, phi_grid])),
        g=_freeze(sample.g),
        g_inv=_freeze(sample.g_inv),
        sqrt_det_g=_freeze(sample.sqrt_det_g),
        christoffel=_freeze(sample.christoffel),
        ricci=_freeze(sample.ricci),
        gauss=_freeze(sample.gauss),
        f=_freeze(profile.f(s)),
        df=_freeze(profile.df(s)),
        boundary=tuple(boundary),
    )


def boundary_data(geom):
    """
    Boundary circles of a geometry.

    Args:
        geom (ChartGeometry): Built geometry

    Returns:
        list: BoundarySegment entries (outer first)
    """
    return list(geom.boundary)


def metric_compatibility_residual(geom):
    """
    Largest |∂_k g_ij − Γ^l_ki g_lj − Γ^l_kj g_il| over the grid.

    ∂_k g_ij is taken from the closed form ∂_s g_φφ = 2ff'.
    """
    dg = np.zeros((2, 2, 2) + geom.shape)
    dg[0, 1, 1] = 2.0 * geom.f[:, None] * geom.df[:, None] * np.ones(geom.shape)
    first = np.einsum("lki...,lj...->kij...", geom.christoffel, geom.g)
    second = np.einsum("lkj...,il...->kij...", geom.christoffel, geom.g)
    return float(np.max(np.abs(dg - first - second)))


def chart_area(geom):
    """Quadrature of √det g over the chart."""
    return float(np.sum(geom.volume_weights))


def boundary_length(geom):
    """Quadrature of dσ_g over all boundary circles."""
    return float(sum(np.sum(segment.weights) for segment in geom.boundary))


def analytic_area(spec):
    """Exact area of the surface described by a spec."""
    if spec.kind == "disk":
        return math.pi * spec.radius ** 2
    if spec.kind == "cap":
        return 2.0 * math.pi * (1.0 - math.cos(spec.theta_max))
    if spec.kind == "cylinder":
        return 2.0 * math.pi * spec.radius * spec.height
    profile = spec.profile
    value, _ = integrate.quad(lambda s: float(profile.f(np.array(s))), profile.s0, profile.s1)
    return 2.0 * math.pi * value


def analytic_boundary_length(spec):
    """Exact total length of the boundary circles."""
    profile = spec.chart_profile()
    total = 2.0 * math.pi * float(profile.f(np.array(profile.s1)))
    if not profile.pole:
        total += 2.0 * math.pi * float(profile.f(np.array(profile.s0)))
    return total


def embedding(geom, s, phi):
    """
    Embedded position and tangent frame of chart points.

    Args:
        geom (ChartGeometry): Geometry with an embedded profile
        s (ndarray): s values
        phi (ndarray): φ values, broadcastable against s

    Returns:
        tuple: (X, X_s, X_φ), each with a leading axis of length 3

    Raises:
        GeometryError: If the profile has no embedding
    """
    profile = geom.profile
    if not profile.embedded:
        raise GeometryError(f"Chart '{profile.name}' has no embedding")
    s, phi = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(phi, dtype=float))
    f = profile.f(s)
    df = profile.df(s)
    cos, sin = np.cos(phi), np.sin(phi)
    position = np.array([f * cos, f * sin, profile.height(s) * np.ones_like(s)])
    d_s = np.array([df * cos, df * sin, profile.dheight(s) * np.ones_like(s)])
    d_phi = np.array([-f * sin, f * cos, np.zeros_like(s)])
    return position, d_s, d_phi
