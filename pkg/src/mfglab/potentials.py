"""Catalogue of potential pairs, their N-corrected costs, and model assembly.

A potential is a scalar function of the mean together with explicit gradient
and Hessian callables.  The corrected cost of the N-player mean problem is
F_N(m) = |m|^2/2 + f(m) + R_f(m)/N  with the reminder
R_f(m) = |grad f|^2/2 + m . grad f - f, and its gradient factorises as
(I + hess f / N)(m + grad f).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .errors import InvalidParameter, KinkQuery
from .numerics import TimeGrid, delarue_riccati


@dataclass(frozen=True)
class Potential:
    name: str
    dim: int
    value: Callable
    gradient: Callable
    hessian: Callable
    bounds: dict
    probe_radius: float
    even: bool = False
    # (C, k) when value(m) = m.C m / 2 + k.m; enables the Riccati oracle
    quad_coeffs: Optional[tuple] = None


def _vec(m, dim):
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if m.shape != (dim,):
        raise InvalidParameter(f"expected point of dimension {dim}, got shape {m.shape}")
    return m


def _scan_bounds(dim, gradient, hessian, radius, n=4001):
    """Sup and Lipschitz bounds of grad, hess and hess.m on a dense probe."""
    if dim == 1:
        pts = np.linspace(-radius, radius, n)[:, None]
    else:
        side = int(math.sqrt(n)) + 1
        ax = np.linspace(-radius, radius, side)
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
    grads = np.array([gradient(p) for p in pts])
    hesss = np.array([hessian(p) for p in pts])
    hessm = np.einsum("nij,nj->ni", hesss, pts)

    def sup(a):
        return float(np.max(np.linalg.norm(a.reshape(len(pts), -1), axis=1)))

    def lip(a):
        d = np.linalg.norm(np.diff(a.reshape(len(pts), -1), axis=0), axis=1)
        step = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        ok = step > 0
        return float(np.max(d[ok] / step[ok]))

    pad = 1.05
    return {
        "grad_sup": pad * sup(grads),
        "grad_lip": pad * lip(grads),
        "hess_sup": pad * sup(hesss),
        "hess_lip": pad * lip(hesss),
        "hessm_sup": pad * sup(hessm),
        "hessm_lip": pad * lip(hessm),
    }


def _build(name, dim, value, gradient, hessian, probe_radius, even, quad_coeffs=None):
    bounds = _scan_bounds(dim, gradient, hessian, probe_radius)
    return Potential(
        name=name,
        dim=dim,
        value=value,
        gradient=gradient,
        hessian=hessian,
        bounds=bounds,
        probe_radius=probe_radius,
        even=even,
        quad_coeffs=quad_coeffs,
    )


def reminder(p: Potential, m) -> float:
    """R_p(m) = |grad p(m)|^2 / 2 + m . grad p(m) - p(m)."""
    m = _vec(m, p.dim)
    g = p.gradient(m)
    return float(0.5 * g @ g + m @ g - p.value(m))


def corrected_cost(p: Potential, N: int, m) -> float:
    """F_N-style cost |m|^2/2 + p(m) + R_p(m)/N."""
    m = _vec(m, p.dim)
    return float(0.5 * m @ m + p.value(m) + reminder(p, m) / N)


def corrected_gradient(p: Potential, N: int, m) -> np.ndarray:
    """(I + hess p / N)(m + grad p), the gradient of corrected_cost."""
    if N < 1:
        raise InvalidParameter("N must be at least 1")
    m = _vec(m, p.dim)
    I = np.eye(p.dim)
    return (I + p.hessian(m) / N) @ (m + p.gradient(m))


# --- catalogue -------------------------------------------------------------


def make_zero(dim: int = 1) -> Potential:
    z = np.zeros(dim)
    Z = np.zeros((dim, dim))
    return _build(
        "zero", dim,
        value=lambda m: 0.0,
        gradient=lambda m: z.copy(),
        hessian=lambda m: Z.copy(),
        probe_radius=10.0, even=True, quad_coeffs=(Z, z),
    )


def make_quadratic(c: float, dim: int = 1, kappa=None) -> Potential:
    """p(m) = c |m|^2 / 2 + kappa . m.

    With c = -1 and kappa = 0 this cancels the |m|^2/2 running state cost,
    which reduces the control problem to a pure control-energy problem with
    constant optimal controls.
    """
    C = c * np.eye(dim)
    k = np.zeros(dim) if kappa is None else np.atleast_1d(np.asarray(kappa, dtype=float))
    if k.shape != (dim,):
        raise InvalidParameter("kappa must have the model dimension")
    even = bool(np.all(k == 0.0))
    name = f"quadratic(c={c})" if even else f"quadratic(c={c},kappa={k.tolist()})"
    return _build(
        name, dim,
        value=lambda m: float(0.5 * c * m @ m + k @ m),
        gradient=lambda m: c * m + k,
        hessian=lambda m: C.copy(),
        probe_radius=10.0, even=even, quad_coeffs=(C, k),
    )


def logcosh_threshold(kappa: float) -> float:
    """Largest C with kappa sech^2(m) > 2 on [0, C): solves kappa sech^2 = 2."""
    return math.acosh(math.sqrt(kappa / 2.0))


def make_logcosh_terminal(kappa: float) -> Potential:
    """g(m) = -kappa log cosh m in dimension 1, kappa > 2.

    Even and concave with two symmetric cost minimizers; for kappa <= 2 the
    associated static problem has a single minimizer, so reject.
    """
    if kappa <= 2:
        raise InvalidParameter(f"logcosh needs kappa > 2, got {kappa}")

    def value(m):
        x = float(np.atleast_1d(m)[0])
        # log cosh x = |x| + log((1 + exp(-2|x|)) / 2), overflow-safe
        return -kappa * (abs(x) + math.log1p(math.exp(-2 * abs(x))) - math.log(2.0))

    def gradient(m):
        return -kappa * np.tanh(np.atleast_1d(m))

    def hessian(m):
        x = float(np.atleast_1d(m)[0])
        return np.array([[-kappa / math.cosh(x) ** 2]]) if abs(x) < 350 else np.zeros((1, 1))

    return _build(f"logcosh(kappa={kappa})", 1, value, gradient, hessian,
                  probe_radius=8.0, even=True)


def _relu_smooth(x, rho):
    """Quartic-bump mollification of max(x, 0) over width rho (vectorized)."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= rho, x, 0.0)
    inside = np.abs(x) < rho
    if np.any(inside):
        s = x[inside] / rho
        k0 = 0.5 + (15.0 / 16.0) * (s - 2.0 * s**3 / 3.0 + s**5 / 5.0)
        k1 = -(rho * 15.0 / 96.0) * (1.0 - s**2) ** 3
        out = np.array(out, dtype=float)
        out[inside] = x[inside] * k0 - k1
    return out


def _relu_smooth_deriv(x, rho):
    x = np.asarray(x, dtype=float)
    out = np.where(x >= rho, 1.0, 0.0)
    inside = np.abs(x) < rho
    if np.any(inside):
        s = x[inside] / rho
        out = np.array(out, dtype=float)
        out[inside] = 0.5 + (15.0 / 16.0) * (s - 2.0 * s**3 / 3.0 + s**5 / 5.0)
    return out


def make_delarue_terminal(b: float, T: float, delta: float, rho: Optional[float] = None,
                          riccati_steps: int = 4000) -> Potential:
    """Terminal potential whose gradient is the saturated-linear coupling.

    grad g(m) = -m/r on |m| <= r and -sign(m) outside, with r = r_delta from
    the scalar Riccati data; the kinks at +-r are mollified by convolution
    with a quartic bump of width rho (default r/50).  The displayed coupling
    is odd, so g itself is even.  rho = 0 keeps the exact piecewise form and
    refuses Hessian queries at the kink.
    """
    grid = TimeGrid(0.0, T, riccati_steps)
    _, _, r = delarue_riccati(b, grid, delta)
    if rho is None:
        rho = r / 50.0
    if rho < 0:
        raise InvalidParameter("mollification width must be nonnegative")
    if rho >= r:
        raise InvalidParameter("mollification width must be below r_delta")

    def gradient(m):
        x = np.atleast_1d(np.asarray(m, dtype=float))
        if rho == 0.0:
            g = np.where(np.abs(x) <= r, -x / r, -np.sign(x))
        else:
            g = -x / r + (_relu_smooth(x - r, rho) - _relu_smooth(-x - r, rho)) / r
        return g

    def hessian(m):
        x = float(np.atleast_1d(m)[0])
        if rho == 0.0:
            if abs(abs(x) - r) < 1e-14:
                raise KinkQuery(f"Hessian undefined at the kink |m| = r = {r:.6g}")
            return np.array([[-1.0 / r if abs(x) < r else 0.0]])
        h = (-1.0 + _relu_smooth_deriv(x - r, rho) + _relu_smooth_deriv(-x - r, rho)) / r
        return np.array([[float(h)]])

    def _value_pos(x):
        # exact antiderivative of the unmollified gradient from 0
        if x <= r:
            exact = -x * x / (2.0 * r)
        else:
            exact = -r / 2.0 - (x - r)
        if rho == 0.0 or x <= r - rho:
            return exact
        # the mollified and exact gradients differ only on [r - rho, r + rho]
        corr, _ = quad(lambda y: float(gradient(np.array([y]))[0] + (1.0 if y > r else y / r)),
                       r - rho, min(x, r + rho), limit=200)
        return exact + corr

    def value(m):
        x = abs(float(np.atleast_1d(m)[0]))
        return float(_value_pos(x))

    p = _build(f"delarue(delta={delta},rho={rho:.6g})", 1, value, gradient, hessian,
               probe_radius=4.0, even=True)
    object.__setattr__(p, "r_delta", r)
    object.__setattr__(p, "rho", rho)
    return p


def make_radial_terminal(gt, gt_p, gt_pp, dim: int, name: str = "radial",
                         probe_radius: float = 6.0) -> Potential:
    """g(m) = gt(|m|) for a scalar profile gt with gt'(0) = 0.

    The gradient gt'(|m|) m/|m| has a removable singularity at the origin and
    the Hessian limit there is gt''(0) I.
    """
    if abs(gt_p(0.0)) > 1e-12:
        raise InvalidParameter("radial profile needs gt'(0) = 0 for a continuous gradient")

    def value(m):
        m = _vec(m, dim)
        return float(gt(float(np.linalg.norm(m))))

    def gradient(m):
        m = _vec(m, dim)
        rr = float(np.linalg.norm(m))
        if rr == 0.0:
            return np.zeros(dim)
        return gt_p(rr) * m / rr

    def hessian(m):
        m = _vec(m, dim)
        rr = float(np.linalg.norm(m))
        if rr < 1e-9:
            return gt_pp(0.0) * np.eye(dim)
        e = m / rr
        P = np.outer(e, e)
        return gt_pp(rr) * P + (gt_p(rr) / rr) * (np.eye(dim) - P)

    return _build(name, dim, value, gradient, hessian, probe_radius, even=True)


def make_radial_logcosh(kappa: float, dim: int) -> Potential:
    if kappa <= 2:
        raise InvalidParameter(f"radial logcosh needs kappa > 2, got {kappa}")
    gt = lambda rr: -kappa * (abs(rr) + math.log1p(math.exp(-2 * abs(rr))) - math.log(2.0))
    gt_p = lambda rr: -kappa * math.tanh(rr)
    gt_pp = lambda rr: -kappa / math.cosh(rr) ** 2 if abs(rr) < 350 else 0.0
    return make_radial_terminal(gt, gt_p, gt_pp, dim,
                                name=f"radial_logcosh(kappa={kappa},d={dim})")


def from_name(name: str, dim: int = 1, **params) -> Potential:
    """Catalogue lookup used by the CLI configuration."""
    table = {
        "zero": lambda: make_zero(dim),
        "quadratic": lambda: make_quadratic(params["c"], dim, params.get("linear")),
        "logcosh": lambda: make_logcosh_terminal(params["kappa"]),
        "delarue": lambda: make_delarue_terminal(
            params.get("b", 0.0), params.get("T", 1.0), params["delta"],
            params.get("rho")),
        "radial_logcosh": lambda: make_radial_logcosh(params["kappa"], dim),
    }
    if name not in table:
        raise InvalidParameter(f"unknown potential {name!r}; known: {sorted(table)}")
    return table[name]()


# --- model assembly --------------------------------------------------------


def _default_xi_sampler(nu0, dim):
    def sample(gen, n):
        z = gen.normal(size=(n, dim))
        np.clip(z, -6.0, 6.0, out=z)
        return nu0[None, :] + z

    return sample


@dataclass(frozen=True)
class ModelSpec:
    """Full model: dynamics (b, sigma, T), potentials (f, g), initial law."""

    dim: int
    b: np.ndarray
    sigma: float
    T: float
    f: Potential
    g: Potential
    nu0: np.ndarray
    xi_sampler: Callable = field(default=None, repr=False)

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        object.__setattr__(self, "b", b)
        nu0 = np.atleast_1d(np.asarray(self.nu0, dtype=float))
        object.__setattr__(self, "nu0", nu0)
        if b.shape != (self.dim, self.dim):
            raise InvalidParameter("drift matrix shape must match the dimension")
        if nu0.shape != (self.dim,):
            raise InvalidParameter("nu0 shape must match the dimension")
        if self.f.dim != self.dim or self.g.dim != self.dim:
            raise InvalidParameter("potential dimensions must match the model")
        if self.sigma < 0:
            raise InvalidParameter("volatility must be nonnegative")
        if self.T <= 0:
            raise InvalidParameter("horizon must be positive")
        if self.xi_sampler is None:
            object.__setattr__(self, "xi_sampler", _default_xi_sampler(nu0, self.dim))

    @property
    def even_data(self) -> bool:
        return self.f.even and self.g.even

    @property
    def running_state_cost_vanishes(self) -> bool:
        """True when |m|^2/2 + f(m) = 0, i.e. f = quadratic(c=-1)."""
        qc = self.f.quad_coeffs
        if qc is None:
            return False
        C, k = qc
        return bool(np.allclose(C, -np.eye(self.dim)) and np.allclose(k, 0.0))


def grad_FN(spec: ModelSpec, N: int, m) -> np.ndarray:
    return corrected_gradient(spec.f, N, m)


def grad_GN(spec: ModelSpec, N: int, m) -> np.ndarray:
    return corrected_gradient(spec.g, N, m)
