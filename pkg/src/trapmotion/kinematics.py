"""Rigid-body kinematics for a rotating, translating object.

The angular velocity is kept in cylindrical form (radius ``alpha``, angle
``phi``, height ``omega3``); the rotation trajectory solves

    R'(t) = R(t) [omega(t)]_x,   R(0) = R0,

and the infinitesimal common-line direction between two frames is

    (1 / (t - s)) * P(e3 x (R(s)^T R(t) e3)),

whose cubic expansion around ``t = s`` is computed here in closed form from
the cylindrical parameters and their derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .closures import ScalarClosure

ORTHOGONALITY_TOL = 1e-10
E3 = np.array([0.0, 0.0, 1.0])


def skew(w):
    """Cross-product matrix: skew(w) @ x == cross(w, x)."""
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def rotation_about_axis(axis, angle):
    """Rodrigues rotation about ``axis`` (need not be unit) by ``angle * |axis|``.

    With ``theta = |axis| * angle`` this is ``exp(angle * skew(axis))``.
    """
    w = np.asarray(axis, dtype=float) * angle
    theta = np.linalg.norm(w)
    K = skew(w)
    if theta < 1e-12:
        return np.eye(3) + K + 0.5 * (K @ K)
    return np.eye(3) + (np.sin(theta) / theta) * K + ((1.0 - np.cos(theta)) / theta**2) * (K @ K)


def rotation_about_e3(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def nearest_rotation(M):
    """Orthogonal polar factor of ``M`` with determinant +1."""
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def orthogonality_defect(R):
    return np.max(np.abs(R.T @ R - np.eye(3)))


def fd_weights(order, x0, xs):
    """Fornberg weights for the ``order``-th derivative at ``x0`` from nodes ``xs``."""
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    if n < order + 1:
        raise ValueError(f"need at least {order + 1} nodes for derivative order {order}")
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = xs[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        for k in range(mn, 0, -1):
            c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
        c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
        c1 = c2
    return c[:, order]


def sampled_derivative(values, times, index, order):
    """Second-order finite-difference derivative of a sampled series.

    Central stencils in the interior (3 points for orders 1-2, 5 points for
    order 3), one-sided stencils of matching accuracy at the boundaries.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if order == 0:
        return values[index]
    half = 1 if order <= 2 else 2
    lo, hi = index - half, index + half
    need = order + 2
    if lo < 0:
        lo, hi = 0, max(hi, need - 1)
    if hi > n - 1:
        hi, lo = n - 1, min(lo, n - need)
    if lo < 0 or hi - lo + 1 < order + 1:
        raise ValueError(f"series too short ({n} samples) for derivative order {order}")
    w = fd_weights(order, times[index], times[lo:hi + 1])
    return float(w @ values[lo:hi + 1])


class AngularParams:
    """Cylindrical description of the angular velocity.

    ``alpha`` is the cylindrical radius (nonnegative), ``phi`` the cylindrical
    angle stored unwrapped, ``omega3`` the height.  Built either from scalar
    closures (exact derivatives) or from dense samples (finite differences).
    """

    def __init__(self, times, alpha, phi, omega3, closures=None):
        self.times = np.asarray(times, dtype=float)
        self.alpha = np.asarray(alpha, dtype=float)
        self.phi = np.asarray(phi, dtype=float)
        self.omega3 = np.asarray(omega3, dtype=float)
        self.closures = closures
        n = self.times.size
        if not (self.alpha.size == self.phi.size == self.omega3.size == n):
            raise ValueError("times, alpha, phi, omega3 must have equal length")
        if np.any(self.alpha < 0.0):
            raise ValueError("cylindrical radius alpha must be nonnegative")
        if n > 1:
            dt = np.diff(self.times)
            if np.any(dt <= 0.0):
                raise ValueError("times must be strictly increasing")
            if np.max(np.abs(dt - dt[0])) > 1e-9 * max(abs(dt[0]), 1.0):
                raise ValueError("times must be uniformly spaced")

    @classmethod
    def from_closures(cls, times, alpha, phi, omega3):
        closures = (alpha, phi, omega3)
        times = np.asarray(times, dtype=float)
        return cls(times, alpha(times), phi(times), omega3(times), closures=closures)

    @classmethod
    def from_samples(cls, times, alpha, phi, omega3):
        return cls(times, alpha, phi, omega3)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def _check_index(self, index):
        if not 0 <= index < self.times.size:
            raise IndexError(f"frame index {index} out of range [0, {self.times.size})")

    def omega(self, index):
        """Angular velocity (alpha cos phi, alpha sin phi, omega3) at frame ``index``."""
        self._check_index(index)
        a, p, w3 = self.alpha[index], self.phi[index], self.omega3[index]
        return np.array([a * np.cos(p), a * np.sin(p), w3])

    def omega_at(self, t):
        """Angular velocity at arbitrary time (closures, or spline through samples)."""
        if self.closures is not None:
            a_c, p_c, w3_c = self.closures
            a, p = a_c(t), p_c(t)
            return np.array([a * np.cos(p), a * np.sin(p), w3_c(t)])
        return self._omega_spline()(t)

    def _omega_spline(self):
        if not hasattr(self, "_spline"):
            comps = np.stack([
                self.alpha * np.cos(self.phi),
                self.alpha * np.sin(self.phi),
                self.omega3,
            ], axis=1)
            self._spline = CubicSpline(self.times, comps, axis=0)
        return self._spline

    def cylindrical_derivatives(self, index):
        """(alpha, phi, omega3) values and time derivatives up to order 3 at a frame.

        Returns three 4-tuples ``(f, f', f'', f''')``.
        """
        self._check_index(index)
        t = self.times[index]
        if self.closures is not None:
            a_c, p_c, w3_c = self.closures
            return (tuple(a_c.derivative(t, m) for m in range(4)),
                    tuple(p_c.derivative(t, m) for m in range(4)),
                    tuple(w3_c.derivative(t, m) for m in range(4)))
        return tuple(
            tuple(sampled_derivative(series, self.times, index, m) for m in range(4))
            for series in (self.alpha, self.phi, self.omega3))

    def omega_derivatives(self, index):
        """Time derivatives of the angular-velocity vector, orders 0..3, at a frame."""
        a, p, w3 = self.cylindrical_derivatives(index)
        c, s = _trig_derivatives(p)
        w1 = _leibniz(a, c)
        w2 = _leibniz(a, s)
        return [np.array([w1[m], w2[m], w3[m]]) for m in range(4)]


def _trig_derivatives(p):
    """Derivatives up to order 3 of cos(phi(t)) and sin(phi(t)) from those of phi."""
    c0, s0 = np.cos(p[0]), np.sin(p[0])
    c = (c0,
         -s0 * p[1],
         -c0 * p[1]**2 - s0 * p[2],
         s0 * p[1]**3 - 3.0 * c0 * p[1] * p[2] - s0 * p[3])
    s = (s0,
         c0 * p[1],
         -s0 * p[1]**2 + c0 * p[2],
         -c0 * p[1]**3 - 3.0 * s0 * p[1] * p[2] + c0 * p[3])
    return c, s


_BINOM = ((1,), (1, 1), (1, 2, 1), (1, 3, 3, 1))


def _leibniz(f, g):
    """Derivatives up to order 3 of a product from factor derivative tuples."""
    return tuple(
        sum(_BINOM[m][j] * f[j] * g[m - j] for j in range(m + 1)) for m in range(4))


@dataclass
class RotationTrajectory:
    """Time-stamped rotation matrices, orthogonal with determinant one."""

    times: np.ndarray
    matrices: np.ndarray
    check: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.matrices = np.asarray(self.matrices, dtype=float)
        if self.matrices.shape != (self.times.size, 3, 3):
            raise ValueError("matrices must have shape (n_times, 3, 3)")
        if self.check:
            self.validate()

    def validate(self, tol=ORTHOGONALITY_TOL):
        prods = np.einsum("nji,njk->nik", self.matrices, self.matrices)
        defect = np.max(np.abs(prods - np.eye(3)))
        if defect > tol:
            raise ValueError(f"trajectory not orthogonal: max |R^T R - I| = {defect:.3e}")
        det_err = np.max(np.abs(np.linalg.det(self.matrices) - 1.0))
        if det_err > tol:
            raise ValueError(f"trajectory determinant drifts: max |det R - 1| = {det_err:.3e}")

    def matrix(self, index):
        return self.matrices[index]

    def __len__(self):
        return self.times.size


def integrate_rotation(params, R0, times, substeps=1):
    """Integrate R' = R [omega]_x with a classical 4th-order one-step method.

    Each accepted step is re-projected onto the nearest orthogonal matrix so
    the trajectory stays on the rotation group to ~1e-15 regardless of length.
    """
    R0 = np.asarray(R0, dtype=float)
    if orthogonality_defect(R0) > 1e-8:
        raise ValueError("initial matrix is not orthogonal within 1e-8")
    if abs(np.linalg.det(R0) - 1.0) > 1e-8:
        raise ValueError("initial matrix must have determinant 1")
    times = np.asarray(times, dtype=float)
    omega = params.omega_at

    mats = np.empty((times.size, 3, 3))
    R = nearest_rotation(R0)
    mats[0] = R
    for i in range(times.size - 1):
        h = (times[i + 1] - times[i]) / substeps
        t = times[i]
        for _ in range(substeps):
            O1 = skew(omega(t))
            Om = skew(omega(t + 0.5 * h))
            O2 = skew(omega(t + h))
            k1 = R @ O1
            k2 = (R + 0.5 * h * k1) @ Om
            k3 = (R + 0.5 * h * k2) @ Om
            k4 = (R + h * k3) @ O2
            R = R + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            R = nearest_rotation(R)
            t += h
        mats[i + 1] = R
    return RotationTrajectory(times, mats)


def constant_rate_rotation(alpha, phi0, sigma, omega3, t):
    """Closed-form trajectory for constant alpha, omega3 and phi(t) = phi0 + sigma*t.

    With w0 the angular velocity at t=0, the solution of the trajectory ODE is
    ``R(t) = exp(t [w0 + sigma e3]_x) Rz(-sigma t)``.
    """
    w0 = np.array([alpha * np.cos(phi0), alpha * np.sin(phi0), omega3])
    return rotation_about_axis(w0 + sigma * E3, t) @ rotation_about_e3(-sigma * t)


def common_line_direction(Rs, Rt, s, t):
    """(1 / (t - s)) * P(e3 x (Rs^T Rt e3)) for two poses at distinct times."""
    if s == t:
        raise ValueError("common-line direction undefined for s == t")
    w = np.asarray(Rs).T @ (np.asarray(Rt)[:, 2])
    return np.array([-w[1], w[0]]) / (t - s)


@dataclass
class CommonLineExpansion:
    """Cubic expansion coefficients of the two common-line directions around t = s.

    ``a`` expands (1/(t-s)) P(e3 x R(s)^T R(t) e3), ``b`` the swapped pairing
    (1/(s-t)) P(e3 x R(t)^T R(s) e3); both share a0 = b0 = alpha*v.
    """

    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray

    @property
    def a(self):
        return np.stack([self.a0, self.a1, self.a2, self.a3])

    @property
    def b(self):
        return np.stack([self.b0, self.b1, self.b2, self.b3])


def _e3_cross(w):
    return np.array([-w[1], w[0], 0.0])


def taylor_coefficients(params, index):
    """Expansion coefficients at frame ``index`` from the angular-velocity derivatives."""
    w, w1, w2, w3v = params.omega_derivatives(index)
    nrm2 = float(w @ w)
    ip = float(w @ w1)
    h, h1, h2 = w[2], w1[2], w2[2]
    P = lambda v: np.asarray(v)[:2].copy()

    a0 = P(w)
    a1 = P(h * _e3_cross(w) + w1) / 2.0
    a2 = P(-nrm2 * w + 2.0 * h * _e3_cross(w1) + h1 * _e3_cross(w) + w2) / 6.0
    a3 = P(-nrm2 * h * _e3_cross(w) + 2.0 * h * h1 * w - 2.0 * h**2 * w1
           - 5.0 * ip * w + 3.0 * h * _e3_cross(w2) - nrm2 * w1
           + 3.0 * h1 * _e3_cross(w1) + h2 * _e3_cross(w) + w3v) / 24.0

    b0 = P(w)
    b1 = P(-h * _e3_cross(w) + w1) / 2.0
    b2 = P(-nrm2 * w - h * _e3_cross(w1) - 2.0 * h1 * _e3_cross(w) + w2) / 6.0
    b3 = P(nrm2 * h * _e3_cross(w) - 2.0 * h * h1 * w + 2.0 * h**2 * w1
           - 3.0 * ip * w - h * _e3_cross(w2) - 3.0 * nrm2 * w1
           - 3.0 * h1 * _e3_cross(w1) - 3.0 * h2 * _e3_cross(w) + w3v) / 24.0

    return CommonLineExpansion(a0, a1, a2, a3, b0, b1, b2, b3)


def reflect_trajectory(traj):
    """Conjugate every matrix by diag(1, 1, -1); an exact involution."""
    mats = traj.matrices.copy()
    mats[:, :2, 2] *= -1.0
    mats[:, 2, :2] *= -1.0
    return RotationTrajectory(traj.times, mats, check=traj.check)
