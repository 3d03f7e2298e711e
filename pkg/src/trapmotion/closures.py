"""Scalar functions of time with exact derivatives up to order three.

Motion parameters (translation components, cylindrical angular-velocity
parameters) are sums of a few elementary terms.  Keeping them symbolic as
term lists lets the simulator evaluate exact derivatives instead of
differencing samples, which the Taylor-coefficient code needs.
"""

from __future__ import annotations

import math

import numpy as np

MAX_ORDER = 3

# falling factorials of 1/2: d^n (x^(1/2)) = _SQRT_COEF[n] * x^(1/2 - n)
_SQRT_COEF = (1.0, 0.5, -0.25, 0.375)


class ClosureSpecError(ValueError):
    """A term specification is malformed."""


class _PolyTerm:
    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.ndim != 1 or self.coeffs.size == 0:
            raise ClosureSpecError("poly term needs a flat, nonempty coefficient list")

    def eval(self, t, order):
        c = self.coeffs
        for _ in range(order):
            c = np.polynomial.polynomial.polyder(c)
        if c.size == 0:
            return np.zeros_like(np.asarray(t, dtype=float))
        return np.polynomial.polynomial.polyval(t, c)

    def spec(self):
        return {"poly": list(self.coeffs)}


class _CosTerm:
    """amp * cos(freq * t + phase); derivatives advance the phase by pi/2."""

    def __init__(self, amp, freq, phase=0.0):
        self.amp = float(amp)
        self.freq = float(freq)
        self.phase = float(phase)

    def eval(self, t, order):
        t = np.asarray(t, dtype=float)
        return (self.amp * self.freq**order
                * np.cos(self.freq * t + self.phase + order * math.pi / 2))

    def spec(self):
        return {"cos": [self.amp, self.freq, self.phase]}


class _SqrtTerm:
    """amp * sqrt(a + b * t), defined for a + b*t > 0."""

    def __init__(self, amp, a, b):
        self.amp = float(amp)
        self.a = float(a)
        self.b = float(b)

    def eval(self, t, order):
        t = np.asarray(t, dtype=float)
        arg = self.a + self.b * t
        if np.any(arg <= 0.0):
            raise ValueError(
                f"sqrt term undefined: {self.a} + {self.b}*t <= 0 in the requested range")
        return self.amp * _SQRT_COEF[order] * self.b**order * arg ** (0.5 - order)

    def spec(self):
        return {"sqrt": [self.amp, self.a, self.b]}


def _build_term(spec):
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ClosureSpecError(f"term must be a single-key mapping, got {spec!r}")
    (kind, args), = spec.items()
    try:
        if kind == "poly":
            return _PolyTerm(args)
        if kind == "cos":
            return _CosTerm(*args)
        if kind == "sin":
            amp, freq, phase = (list(args) + [0.0])[:3]
            return _CosTerm(amp, freq, phase - math.pi / 2)
        if kind == "sqrt":
            return _SqrtTerm(*args)
    except ClosureSpecError:
        raise
    except (TypeError, ValueError) as exc:
        raise ClosureSpecError(f"bad arguments for {kind!r} term: {args!r}") from exc
    raise ClosureSpecError(f"unknown term kind {kind!r}")


class ScalarClosure:
    """Sum of elementary terms, differentiable up to order ``MAX_ORDER``."""

    def __init__(self, terms):
        self.terms = [_build_term(t) if isinstance(t, dict) else t for t in terms]

    @classmethod
    def from_spec(cls, spec):
        """Accepts a term dict, a list of term dicts, or a plain constant."""
        if isinstance(spec, (int, float)):
            return cls([{"poly": [float(spec)]}])
        if isinstance(spec, dict):
            spec = [spec]
        if not isinstance(spec, list):
            raise ClosureSpecError(f"closure spec must be number, dict or list, got {spec!r}")
        return cls(spec)

    @classmethod
    def constant(cls, value):
        return cls([{"poly": [float(value)]}])

    @classmethod
    def poly(cls, *coeffs):
        return cls([{"poly": list(coeffs)}])

    def __call__(self, t):
        return self.derivative(t, 0)

    def derivative(self, t, order):
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"derivative order must be in [0, {MAX_ORDER}], got {order}")
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for term in self.terms:
            out = out + term.eval(t, order)
        return out if out.shape else float(out)

    def spec(self):
        return [term.spec() for term in self.terms]
