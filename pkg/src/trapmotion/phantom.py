"""Analytic phantom, rigid-motion application, and ray-quadrature projection.

A moving object with attenuation coefficient ``u`` seen along the third axis
produces the frame

    J(t, x1, x2) = integral over x3 of u(c3 + R(t) (x - c3 + T(t))),

computed here by midpoint quadrature along the ray.  The phantom family is
``prod_i |x - P_i|^2 * exp(-|diag(d) x|^2 / 4)``; an empty point list gives a
plain Gaussian, for which closed-form transforms are available as oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .kinematics import RotationTrajectory, integrate_rotation


@numba.njit(parallel=True, cache=True)
def _poly_gauss_values(pts, points, dvec, out):
    n = pts.shape[0]
    m = points.shape[0]
    for i in numba.prange(n):
        y0, y1, y2 = pts[i, 0], pts[i, 1], pts[i, 2]
        f = math.exp(-0.25 * ((dvec[0] * y0) ** 2 + (dvec[1] * y1) ** 2
                              + (dvec[2] * y2) ** 2))
        for q in range(m):
            dx = y0 - points[q, 0]
            dy = y1 - points[q, 1]
            dz = y2 - points[q, 2]
            f *= dx * dx + dy * dy + dz * dz
        out[i] = f


@numba.njit(parallel=True, cache=True)
def _render_poly_gauss(x1, x2, zs, r0, r1, r2, shift, points, dvec, dz, out):
    n1, n2, nz = x1.size, x2.size, zs.size
    m = points.shape[0]
    for i in numba.prange(n1):
        a0 = x1[i] * r0[0] + shift[0]
        a1 = x1[i] * r0[1] + shift[1]
        a2 = x1[i] * r0[2] + shift[2]
        for j in range(n2):
            b0 = a0 + x2[j] * r1[0]
            b1 = a1 + x2[j] * r1[1]
            b2 = a2 + x2[j] * r1[2]
            acc = 0.0
            for k in range(nz):
                y0 = b0 + zs[k] * r2[0]
                y1 = b1 + zs[k] * r2[1]
                y2 = b2 + zs[k] * r2[2]
                f = math.exp(-0.25 * ((dvec[0] * y0) ** 2 + (dvec[1] * y1) ** 2
                                      + (dvec[2] * y2) ** 2))
                for q in range(m):
                    dx = y0 - points[q, 0]
                    dy = y1 - points[q, 1]
                    dzp = y2 - points[q, 2]
                    f *= dx * dx + dy * dy + dzp * dzp
                acc += f
            out[i, j] = acc * dz


class PolyGaussianPhantom:
    """Attenuation coefficient prod |x - P_i|^2 * exp(-|diag(d) x|^2 / 4)."""

    def __init__(self, points=(), dvec=(1.0, 1.0, 1.0)):
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.dvec = np.asarray(dvec, dtype=float)
        if self.dvec.shape != (3,) or np.any(self.dvec <= 0):
            raise ValueError("dvec must be three positive diagonal entries")
        self._moments = {}

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 3)
        out = np.empty(flat.shape[0])
        _poly_gauss_values(flat, self.points, self.dvec, out)
        return out.reshape(pts.shape[:-1])

    def reflected(self):
        """The phantom mirrored in the x1x2-plane through the origin."""
        pts = self.points.copy()
        pts[:, 2] *= -1.0
        return PolyGaussianPhantom(pts, self.dvec)

    def peak_estimate(self):
        if not hasattr(self, "_peak"):
            r = max(4.0 / np.min(self.dvec), np.max(np.abs(self.points), initial=0.0) + 2.0)
            ax = np.linspace(-r, r, 33)
            g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
            self._peak = float(np.max(self(g)))
        return self._peak

    def radial_bound(self, r):
        """Upper bound for u on the sphere |x| = r."""
        bound = np.exp(-0.25 * np.min(self.dvec) ** 2 * np.asarray(r, dtype=float) ** 2)
        for p in self.points:
            bound = bound * (r + np.linalg.norm(p)) ** 2
        return bound

    def support_radius(self, rel_tol=1e-16):
        """Radius beyond which u is below ``rel_tol`` of its peak."""
        peak = self.peak_estimate()
        r = max(4.0 / np.min(self.dvec), np.max(np.abs(self.points), initial=0.0) + 1.0)
        while self.radial_bound(r) > rel_tol * peak:
            r *= 1.25
        lo = 0.0
        for _ in range(60):
            mid = 0.5 * (lo + r)
            if self.radial_bound(mid) > rel_tol * peak:
                lo = mid
            else:
                r = mid
        return r

    def moments(self, dx=0.1):
        """Total mass and center by midpoint quadrature over the support box."""
        if dx not in self._moments:
            r = self.support_radius(1e-18)
            n = int(np.ceil(2.0 * r / dx))
            ax = (np.arange(n) - (n - 1) / 2.0) * dx
            vals = np.empty((n, n, n))
            # evaluate slab by slab to bound memory
            g12 = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
            pts = np.empty((n, n, 3))
            pts[:, :, :2] = g12
            for k in range(n):
                pts[:, :, 2] = ax[k]
                vals[:, :, k] = self(pts)
            mass = float(vals.sum()) * dx**3
            c = np.array([
                float(np.einsum("i,ijk->", ax, vals)),
                float(np.einsum("j,ijk->", ax, vals)),
                float(np.einsum("k,ijk->", ax, vals)),
            ]) * dx**3 / mass
            self._moments[dx] = (mass, c)
        return self._moments[dx]

    def mass(self, dx=0.1):
        return self.moments(dx)[0]

    def center(self, dx=0.1):
        return self.moments(dx)[1]

    # Closed forms, available for the pure Gaussian member of the family.

    def fourier3(self, k):
        """Three-dimensional Fourier transform, (2 pi)^(-3/2) convention."""
        if self.points.size:
            raise NotImplementedError("closed-form transform only for the pure Gaussian")
        k = np.asarray(k, dtype=float)
        scaled = k / self.dvec
        return (2.0**1.5 / np.prod(self.dvec)
                * np.exp(-np.sum(scaled * scaled, axis=-1)))

    def projection(self, x12):
        """Closed-form static projection along x3 (pure Gaussian only)."""
        if self.points.size:
            raise NotImplementedError("closed-form projection only for the pure Gaussian")
        x12 = np.asarray(x12, dtype=float)
        d = self.dvec
        radial = (d[0] * x12[..., 0]) ** 2 + (d[1] * x12[..., 1]) ** 2
        return 2.0 * math.sqrt(math.pi) / d[2] * np.exp(-0.25 * radial)


def sec4_phantom():
    """The three-point polynomial-Gaussian phantom used in the experiments."""
    return PolyGaussianPhantom(
        points=[(1.0, 0.5, -1.0), (-0.5, 1.0, 1.0), (0.0, -1.0, 0.5)],
        dvec=(math.sqrt(2.0), 1.0, 1.0))


def gaussian_phantom(width=1.0):
    """exp(-|x|^2 / (4 width^2)) as a member of the phantom family."""
    return PolyGaussianPhantom(points=(), dvec=(1.0 / width,) * 3)


@dataclass(frozen=True)
class FrameGeometry:
    """Regular 2D raster: pixel (i, j) sits at origin2 + (i, j) * spacing."""

    n1: int
    n2: int
    spacing: float
    origin2: tuple

    @classmethod
    def centered(cls, n1, n2, spacing):
        return cls(n1, n2, float(spacing),
                   (-(n1 // 2) * spacing, -(n2 // 2) * spacing))

    @property
    def x1(self):
        return self.origin2[0] + self.spacing * np.arange(self.n1)

    @property
    def x2(self):
        return self.origin2[1] + self.spacing * np.arange(self.n2)


@dataclass
class ProjectionStack:
    """Frames J(t_l, x1, x2) on a common raster with uniform time step."""

    geometry: FrameGeometry
    t0: float
    dt: float
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (self.geometry.n1,
                                                              self.geometry.n2):
            raise ValueError("frames must have shape (n_frames, n1, n2)")
        if np.any(self.frames < 0.0):
            raise ValueError("frame values must be nonnegative")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_frames)

    def frame_mass(self, index):
        return float(self.frames[index].sum()) * self.geometry.spacing**2


class MotionGroundTruth:
    """Sampled rigid motion: translation T(t_l) plus rotation trajectory."""

    def __init__(self, times, translation, rotation, angular):
        self.times = np.asarray(times, dtype=float)
        self.translation = np.asarray(translation, dtype=float)
        self.rotation = rotation
        self.angular = angular
        if self.translation.shape != (self.times.size, 3):
            raise ValueError("translation must have shape (n_times, 3)")
        if len(rotation) != self.times.size:
            raise ValueError("rotation trajectory length mismatch")

    @classmethod
    def from_closures(cls, times, translation_closures, angular):
        times = np.asarray(times, dtype=float)
        trans = np.stack([c(times) for c in translation_closures], axis=1)
        rotation = integrate_rotation(angular, np.eye(3), times)
        return cls(times, trans, rotation, angular)

    def consistency_defect(self):
        """Max deviation between the stored rotation and re-integrating omega."""
        redo = integrate_rotation(self.angular, self.rotation.matrix(0), self.times)
        return float(np.max(np.abs(redo.matrices - self.rotation.matrices)))


def affine_point(x, R, T, c3):
    """Rigid-motion image of ``x``: c3 + R (x - c3 + T)."""
    x = np.asarray(x, dtype=float)
    return c3 + (np.asarray(R) @ (x - c3 + T).T).T if x.ndim > 1 else \
        np.asarray(c3) + np.asarray(R) @ (x - np.asarray(c3) + np.asarray(T))


def _ray_window(phantom_radius, c3, T, ray_step):
    """Midpoint samples along x3 covering the transformed support."""
    center = np.asarray(c3) - np.asarray(T)
    rho = phantom_radius + np.linalg.norm(c3)
    z_lo = center[2] - rho
    nz = int(np.ceil(2.0 * rho / ray_step))
    return z_lo + (np.arange(nz) + 0.5) * ray_step


def render_frame(phantom, R, T, c3, geometry, ray_step=None, z_span=None):
    """One attenuation projection frame by midpoint ray quadrature.

    ``phantom`` is a PolyGaussianPhantom (fast path) or any callable mapping
    (..., 3) points to nonnegative values with a ``support_radius`` method.
    """
    R = np.asarray(R, dtype=float)
    T = np.asarray(T, dtype=float)
    c3 = np.asarray(c3, dtype=float)
    dz = float(ray_step if ray_step is not None else geometry.spacing)
    radius = phantom.support_radius(1e-16)
    if z_span is None:
        zs = _ray_window(radius, c3, T, dz)
    else:
        z_lo, z_hi = z_span
        need = _ray_window(phantom.support_radius(1e-8), c3, T, dz)
        if z_lo > need[0] or z_hi < need[-1]:
            raise ValueError(
                f"ray extent [{z_lo}, {z_hi}] too small: support needs "
                f"[{need[0]:.3f}, {need[-1]:.3f}] (truncated mass above 1e-6 of total)")
        nz = int(np.ceil((z_hi - z_lo) / dz))
        zs = z_lo + (np.arange(nz) + 0.5) * dz

    shift = c3 + R @ (T - c3)
    if isinstance(phantom, PolyGaussianPhantom):
        out = np.empty((geometry.n1, geometry.n2))
        _render_poly_gauss(geometry.x1, geometry.x2, zs,
                           np.ascontiguousarray(R[:, 0]), np.ascontiguousarray(R[:, 1]),
                           np.ascontiguousarray(R[:, 2]), shift,
                           phantom.points, phantom.dvec, dz, out)
        return out
    # generic path: evaluate the callable in z-chunks
    x1 = geometry.x1[:, None, None]
    x2 = geometry.x2[None, :, None]
    out = np.zeros((geometry.n1, geometry.n2))
    for lo in range(0, zs.size, 64):
        z = zs[lo:lo + 64][None, None, :]
        pts = np.empty((geometry.n1, geometry.n2, z.shape[-1], 3))
        for axis in range(3):
            pts[..., axis] = (x1 * R[axis, 0] + x2 * R[axis, 1] + z * R[axis, 2]
                              + shift[axis])
        out += phantom(pts).sum(axis=-1)
    return out * dz


def render_stack(phantom, motion, geometry, t0, dt, ray_step=None, c3=None):
    """Render every frame of a motion into a ProjectionStack."""
    if c3 is None:
        c3 = phantom.center()
    frames = np.empty((motion.times.size, geometry.n1, geometry.n2))
    for l in range(motion.times.size):
        frames[l] = render_frame(phantom, motion.rotation.matrix(l),
                                 motion.translation[l], c3, geometry, ray_step)
    return ProjectionStack(geometry, t0, dt, frames)


@dataclass
class VolumeGrid:
    """Sampled attenuation coefficient on a regular 3D grid."""

    values: np.ndarray
    spacing: float
    origin: np.ndarray
    c3: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("values must be a 3D array")
        if np.any(self.values < 0.0):
            raise ValueError("attenuation values must be nonnegative")
        if self.values.sum() <= 0.0:
            raise ValueError("total mass must be positive")
        if self.c3 is None:
            self.c3 = center3(self)
        else:
            self.c3 = np.asarray(self.c3, dtype=float)
            if np.max(np.abs(self.c3 - center3(self))) > 1e-12:
                raise ValueError("stored c3 disagrees with the discrete center")

    @classmethod
    def from_phantom(cls, phantom, dims, spacing, origin=None):
        dims = tuple(int(d) for d in dims)
        if origin is None:
            origin = np.array([-(d // 2) * spacing for d in dims])
        axes = [origin[i] + spacing * np.arange(dims[i]) for i in range(3)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(phantom(pts), float(spacing), origin)

    @property
    def mass(self):
        return float(self.values.sum()) * self.spacing**3

    def axis_coords(self, axis):
        return self.origin[axis] + self.spacing * np.arange(self.values.shape[axis])

    def support_radius(self, rel_tol=1e-16):
        corners = np.abs(self.origin) + self.spacing * np.asarray(self.values.shape)
        return float(np.linalg.norm(np.maximum(np.abs(self.origin), corners)))

    def __call__(self, pts):
        """Trilinear interpolation; zero outside the grid."""
        pts = np.asarray(pts, dtype=float)
        idx = (pts - self.origin) / self.spacing
        flat = idx.reshape(-1, 3)
        base = np.floor(flat).astype(np.int64)
        frac = flat - base
        shape = np.asarray(self.values.shape)
        out = np.zeros(flat.shape[0])
        for corner in range(8):
            offs = np.array([(corner >> b) & 1 for b in range(3)])
            nodes = base + offs
            ok = np.all((nodes >= 0) & (nodes < shape), axis=1)
            w = np.prod(np.where(offs, frac, 1.0 - frac), axis=1)
            vals = np.zeros(flat.shape[0])
            vals[ok] = self.values[nodes[ok, 0], nodes[ok, 1], nodes[ok, 2]]
            out += w * vals
        return out.reshape(pts.shape[:-1])


def center3(grid):
    """Mass-weighted mean coordinate of a sampled volume (midpoint quadrature)."""
    total = grid.values.sum()
    if total <= 0.0:
        raise ValueError("cannot compute the center of a zero-mass volume")
    return np.array([
        np.einsum("i,ijk->", grid.axis_coords(0), grid.values),
        np.einsum("j,ijk->", grid.axis_coords(1), grid.values),
        np.einsum("k,ijk->", grid.axis_coords(2), grid.values),
    ]) / total


def center2(frame, geometry):
    """Mass-weighted mean pixel coordinate of one projection frame."""
    total = frame.sum()
    if total <= 0.0:
        raise ValueError("cannot compute the center of a zero-mass frame")
    return np.array([
        np.einsum("i,ij->", geometry.x1, frame),
        np.einsum("j,ij->", geometry.x2, frame),
    ]) / total


def reflect_volume(grid):
    """Re-index the volume with x3 -> -x3 about the plane through the origin."""
    values = grid.values[:, :, ::-1].copy()
    n3 = grid.values.shape[2]
    origin = grid.origin.copy()
    origin[2] = -(grid.origin[2] + (n3 - 1) * grid.spacing)
    return VolumeGrid(values, grid.spacing, origin)
