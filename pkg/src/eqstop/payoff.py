"""Reward vectors ``f``, ``h`` and the nonlinearity ``g`` of the objective
``E[f(X_tau)] + g(E[h(X_tau)])``.

``g`` is restricted to a handful of declarative families so that best
responses can exploit its shape exactly and model files can describe it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .chain import MarkovModel, parse_number
from .errors import CapabilityError, ParameterError

FAMILIES = (
    "zero",
    "affine",
    "mean_variance",
    "neg_square",
    "shifted_positive_part",
    "piecewise_polynomial",
)
SHAPES = ("affine", "convex", "strictly_convex", "concave", "general")
SHAPE_SAMPLES = 10_000


@dataclass(frozen=True)
class GDescriptor:
    """A scalar function ``g`` together with its declared shape.

    Evaluation methods accept scalars or arrays.
    """

    family: str
    params: tuple = ()
    shape: str = "general"
    differentiability: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown g family {self.family!r}")
        if self.shape not in SHAPES:
            raise ParameterError(f"unknown shape {self.shape!r}")
        if self.differentiability not in (0, 1, 2):
            raise ParameterError("differentiability must be 0, 1 or 2")

    # piecewise polynomials are stored as (breakpoints, coefficient rows)
    def _pieces(self):
        breaks, coefs = self.params
        return np.asarray(breaks, dtype=float), [np.asarray(c, dtype=float) for c in coefs]

    def _piecewise(self, y, order):
        breaks, coefs = self._pieces()
        y = np.asarray(y, dtype=float)
        piece = np.searchsorted(breaks, y, side="right")
        out = np.zeros_like(y)
        for k, c in enumerate(coefs):
            if order:
                c = npoly.polyder(c, order) if c.size > order else np.zeros(1)
            sel = piece == k
            if np.any(sel):
                out[sel] = npoly.polyval(y[sel], c)
        return out if out.ndim else float(out)

    def __call__(self, y):
        fam = self.family
        if fam == "zero":
            return np.zeros_like(y, dtype=float) if np.ndim(y) else 0.0
        if fam == "affine":
            a, b = self.params
            return a * np.asarray(y, dtype=float) + b if np.ndim(y) else a * y + b
        if fam == "mean_variance":
            (gamma,) = self.params
            return y + gamma * y * y
        if fam == "neg_square":
            return -(y * y)
        if fam == "shifted_positive_part":
            (c,) = self.params
            return np.maximum(y - c, 0.0) if np.ndim(y) else max(y - c, 0.0)
        return self._piecewise(y, 0)

    def _need(self, order):
        if order > self.differentiability:
            raise CapabilityError(
                f"g ({self.family}) is declared differentiable to order "
                f"{self.differentiability}; derivative of order {order} requested"
            )

    def prime(self, y):
        self._need(1)
        fam = self.family
        if fam == "zero":
            return np.zeros_like(y, dtype=float) if np.ndim(y) else 0.0
        if fam == "affine":
            return np.full(np.shape(y), float(self.params[0])) if np.ndim(y) else float(self.params[0])
        if fam == "mean_variance":
            return 1.0 + 2.0 * self.params[0] * y
        if fam == "neg_square":
            return -2.0 * y
        return self._piecewise(y, 1)

    def second(self, y):
        self._need(2)
        fam = self.family
        if fam in ("zero", "affine"):
            return np.zeros(np.shape(y)) if np.ndim(y) else 0.0
        if fam == "mean_variance":
            return np.full(np.shape(y), 2.0 * self.params[0]) if np.ndim(y) else 2.0 * self.params[0]
        if fam == "neg_square":
            return np.full(np.shape(y), -2.0) if np.ndim(y) else -2.0
        return self._piecewise(y, 2)

    @property
    def is_convex(self) -> bool:
        return self.shape in ("affine", "convex", "strictly_convex")

    @property
    def is_concave(self) -> bool:
        return self.shape in ("affine", "concave")

    def to_dict(self) -> dict:
        out = {"family": self.family, "shape": self.shape, "differentiability": self.differentiability}
        if self.family == "affine":
            out["params"] = {"a": self.params[0], "b": self.params[1]}
        elif self.family == "mean_variance":
            out["params"] = {"gamma": self.params[0]}
        elif self.family == "shifted_positive_part":
            out["params"] = {"c": self.params[0]}
        elif self.family == "piecewise_polynomial":
            breaks, coefs = self.params
            out["params"] = {"breakpoints": list(breaks), "coefficients": [list(c) for c in coefs]}
        return out


def g_eval(g: GDescriptor, y):
    return g(y)


def g_prime(g: GDescriptor, y):
    return g.prime(y)


def g_second(g: GDescriptor, y):
    return g.second(y)


def zero_g() -> GDescriptor:
    return GDescriptor("zero", (), "affine", 2)


def affine_g(a: float, b: float = 0.0) -> GDescriptor:
    """``g(y) = a*y + b``."""
    return GDescriptor("affine", (float(a), float(b)), "affine", 2)


def mean_variance_g(gamma: float) -> GDescriptor:
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    return GDescriptor("mean_variance", (float(gamma),), "strictly_convex", 2)


def neg_square_g() -> GDescriptor:
    return GDescriptor("neg_square", (), "concave", 2)


def shifted_positive_part_g(c: float) -> GDescriptor:
    return GDescriptor("shifted_positive_part", (float(c),), "convex", 0)


def piecewise_g(breakpoints, coefficients, shape="general", differentiability=0) -> GDescriptor:
    """Piecewise polynomial; ``coefficients[k]`` (ascending powers of ``y``)
    applies on the k-th piece, the right-hand piece at each breakpoint."""
    breaks = tuple(float(b) for b in breakpoints)
    if list(breaks) != sorted(set(breaks)):
        raise ParameterError("breakpoints must be strictly increasing")
    coefs = tuple(tuple(float(c) for c in row) for row in coefficients)
    if len(coefs) != len(breaks) + 1:
        raise ParameterError("need exactly one coefficient list per piece")
    return GDescriptor("piecewise_polynomial", (breaks, coefs), shape, differentiability)


def verify_shape(g: GDescriptor, lo: float, hi: float) -> bool:
    """Check the declared shape of ``g`` on ``[lo, hi]``.

    Built-in families and single-piece polynomials are checked exactly via the
    second derivative polynomial; genuinely piecewise families by sampled second
    differences.
    """
    if g.shape == "general":
        return True
    if g.family != "piecewise_polynomial":
        expected = {
            "zero": {"affine", "convex", "concave"},
            "affine": {"affine", "convex", "concave"},
            "mean_variance": {"convex", "strictly_convex"},
            "neg_square": {"concave"},
            "shifted_positive_part": {"convex"},
        }[g.family]
        return g.shape in expected
    breaks, coefs = g._pieces()
    if len(coefs) == 1 or hi <= lo:
        c = coefs[0] if len(coefs) == 1 else coefs[int(np.searchsorted(breaks, lo, side="right"))]
        return _polynomial_shape_ok(c, lo, hi, g.shape)
    y = np.linspace(lo, hi, SHAPE_SAMPLES)
    v = g(y)
    d2 = v[2:] - 2 * v[1:-1] + v[:-2]
    tol = 1e-12 * max(1.0, float(np.max(np.abs(v))))
    if g.shape == "affine":
        return bool(np.all(np.abs(d2) <= tol))
    if g.shape == "concave":
        return bool(np.all(d2 <= tol))
    if np.any(d2 < -tol):
        return False
    if g.shape == "strictly_convex":
        # no linear stretch spanning consecutive samples
        flat = np.abs(d2) <= tol
        return not bool(np.any(flat[1:] & flat[:-1]))
    return True


def _polynomial_shape_ok(c, lo, hi, shape) -> bool:
    d2 = npoly.polyder(c, 2) if c.size > 2 else np.zeros(1)
    d2 = np.trim_zeros(d2, "b")
    if shape == "affine":
        return d2.size == 0
    if d2.size == 0:
        return shape in ("convex", "concave")
    # extrema of g'' on [lo, hi]: endpoints and real critical points inside
    pts = [lo, hi]
    if d2.size > 1:
        for r in npoly.polyroots(npoly.polyder(d2)):
            if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
                pts.append(r.real)
    vals = npoly.polyval(np.array(pts), d2)
    if shape == "concave":
        return bool(np.all(vals <= 1e-12))
    # a nonzero polynomial g'' >= 0 vanishes only at isolated points
    return bool(np.all(vals >= -1e-12))


@dataclass(frozen=True, eq=False)
class PayoffSpec:
    f: np.ndarray
    h: np.ndarray
    g: GDescriptor
    kind: str = "custom"

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        h = np.array(self.h, dtype=float)
        if f.shape != h.shape or f.ndim != 1:
            raise ParameterError("f and h must be vectors of equal length")
        f.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "h", h)

    @property
    def attainable(self) -> tuple[float, float]:
        return float(self.h.min()), float(self.h.max())

    def to_dict(self) -> dict:
        if self.kind == "mean_variance":
            return {"type": "mean_variance", "gamma": self.g.params[0]}
        if self.kind == "variance":
            return {"type": "variance"}
        return {"type": "custom", "f": self.f.tolist(), "h": self.h.tolist(), "g": self.g.to_dict()}


def make_payoff(model: MarkovModel, f, h, g: GDescriptor, kind: str = "custom") -> PayoffSpec:
    spec = PayoffSpec(f, h, g, kind)
    if spec.f.size != model.n:
        raise ParameterError(f"payoff vectors have length {spec.f.size}, model has {model.n} states")
    if model.cemetery is not None:
        d = model.cemetery
        if spec.f[d] != 0 or spec.h[d] != 0 or g(0.0) != 0:
            raise ParameterError("killed chains need f = h = 0 at the cemetery and g(0) = 0")
    lo, hi = spec.attainable
    if not verify_shape(g, lo, hi):
        raise ParameterError(f"g is not {g.shape} on the attainable interval [{lo}, {hi}]")
    return spec


def make_mean_variance(model: MarkovModel, gamma: float) -> PayoffSpec:
    """``f = -gamma x^2``, ``h = x``, ``g(y) = y + gamma y^2``, so that
    ``J_p(x) = E[X_tau] - gamma Var(X_tau)``."""
    g = mean_variance_g(gamma)
    x = model.values
    f = -g.params[0] * x * x
    if model.cemetery is not None:
        f[model.cemetery] = 0.0
    return make_payoff(model, f, x, g, kind="mean_variance")


def make_variance(model: MarkovModel) -> PayoffSpec:
    """``f = x^2``, ``h = x``, ``g(y) = -y^2``, so that ``J_p(x) = Var(X_tau)``."""
    x = model.values
    return make_payoff(model, x * x, x, neg_square_g(), kind="variance")


def identity_residual(model: MarkovModel, payoff: PayoffSpec) -> float:
    """Max deviation from the built-in identities ``f + g(h) = x``
    (mean-variance) or ``f + g(h) = 0`` (variance); 0 for custom payoffs."""
    stop_now = payoff.f + payoff.g(payoff.h)
    if payoff.kind == "mean_variance":
        return float(np.max(np.abs(stop_now - model.values)))
    if payoff.kind == "variance":
        return float(np.max(np.abs(stop_now)))
    return 0.0


def g_from_dict(d: dict) -> GDescriptor:
    family = d.get("family")
    params = d.get("params") or {}
    if family == "zero":
        return zero_g()
    if family == "affine":
        return affine_g(parse_number(params.get("a", 1.0)), parse_number(params.get("b", 0.0)))
    if family == "mean_variance":
        return mean_variance_g(parse_number(params["gamma"]))
    if family == "neg_square":
        return neg_square_g()
    if family == "shifted_positive_part":
        return shifted_positive_part_g(parse_number(params.get("c", 0.0)))
    if family == "piecewise_polynomial":
        return piecewise_g(
            [parse_number(b) for b in params.get("breakpoints", [])],
            [[parse_number(c) for c in row] for row in params["coefficients"]],
            shape=d.get("shape", "general"),
            differentiability=int(d.get("differentiability", 0)),
        )
    raise ParameterError(f"unknown g family {family!r}")


def payoff_from_dict(model: MarkovModel, d: dict) -> PayoffSpec:
    kind = d.get("type")
    if kind == "mean_variance":
        return make_mean_variance(model, parse_number(d["gamma"]))
    if kind == "variance":
        return make_variance(model)
    if kind == "custom":
        f = [parse_number(v) for v in d["f"]]
        h = [parse_number(v) for v in d["h"]]
        return make_payoff(model, f, h, g_from_dict(d["g"]))
    raise ParameterError(f"unknown payoff type {kind!r}")
