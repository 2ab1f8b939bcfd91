"""Deterministic limit control problem: shooting, enumeration, value function.

The first-order system is
    mdot   = b m - eta
    etadot = -(b^T eta + m + grad f(m))
with terminal condition eta_T = m_T + grad g(m_T).  Stationary points are
found by multi-start shooting on the unknown initial adjoint; minimizers are
the stationary points whose cost ties the minimum.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import InvalidParameter, InvalidReduction, NoStationaryPoint
from .numerics import TimeGrid
from .potentials import ModelSpec


@dataclass
class OCSolution:
    grid: TimeGrid
    m: np.ndarray        # (steps+1, d)
    eta: np.ndarray      # (steps+1, d)
    cost: float
    terminal_residual: float
    classification: str = "stationary-only"

    @property
    def beta(self) -> np.ndarray:
        return -self.eta

    @property
    def eta0(self) -> np.ndarray:
        return self.eta[0]


@dataclass
class StationarySet:
    solutions: list                 # sorted by cost
    min_cost: float
    multiplicity: int               # count of cost-tied minimizers

    def minimizers(self):
        return [s for s in self.solutions if s.classification == "minimizer"]


def _pontryagin_rhs(spec: ModelSpec):
    b = spec.b
    d = spec.dim
    grad_f = spec.f.gradient

    def rhs(t, z):
        m, eta = z[:d], z[d:]
        dm = b @ m - eta
        deta = -(b.T @ eta + m + grad_f(m))
        return np.concatenate([dm, deta])

    return rhs


def _integrate_pontryagin(spec: ModelSpec, t0, nu0, eta0, steps):
    """RK4 on the coupled (m, eta) system; returns node trajectories."""
    rhs = _pontryagin_rhs(spec)
    d = spec.dim
    grid = TimeGrid(t0, spec.T, steps)
    dt = grid.dt
    nodes = grid.nodes
    z = np.concatenate([nu0, eta0]).astype(float)
    out = np.empty((steps + 1, 2 * d))
    out[0] = z
    for k in range(steps):
        t = nodes[k]
        k1 = rhs(t, z)
        k2 = rhs(t + dt / 2, z + dt / 2 * k1)
        k3 = rhs(t + dt / 2, z + dt / 2 * k2)
        k4 = rhs(t + dt, z + dt * k3)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)):
            return None, grid
        out[k + 1] = z
    return out, grid


def trajectory_cost(spec: ModelSpec, grid: TimeGrid, m, beta) -> float:
    """Trapezoid quadrature of the running cost plus the terminal cost."""
    running = 0.5 * np.sum(beta**2, axis=1) + 0.5 * np.sum(m**2, axis=1)
    running = running + np.array([spec.f.value(x) for x in m])
    terminal = 0.5 * float(m[-1] @ m[-1]) + spec.g.value(m[-1])
    return float(np.trapezoid(running, grid.nodes) + terminal)


def shoot(spec: ModelSpec, t0, nu0, eta0_guess, steps_per_unit: int = 1000,
          tol: float = 1e-9, max_iter: int = 60, fd_step: float = 1e-6):
    """Newton shooting on the initial adjoint.

    Returns an OCSolution on success, None when Newton stagnates.  The
    Jacobian of the terminal residual is assembled by forward differences and
    the Newton step is damped by halving until the residual decreases.
    """
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    eta0 = np.atleast_1d(np.asarray(eta0_guess, dtype=float)).copy()
    d = spec.dim
    steps = max(int(round(steps_per_unit * (spec.T - t0))), 16)

    def residual(e0):
        traj, grid = _integrate_pontryagin(spec, t0, nu0, e0, steps)
        if traj is None:
            return None, None, None
        mT, etaT = traj[-1, :d], traj[-1, d:]
        return etaT - (mT + spec.g.gradient(mT)), traj, grid

    res, traj, grid = residual(eta0)
    if res is None:
        return None
    for _ in range(max_iter):
        nrm = float(np.linalg.norm(res))
        if nrm < tol:
            break
        jac = np.empty((d, d))
        for j in range(d):
            probe = eta0.copy()
            probe[j] += fd_step
            res_j, _, _ = residual(probe)
            if res_j is None:
                return None
            jac[:, j] = (res_j - res) / fd_step
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-6:
            cand = eta0 + lam * step
            res_c, traj_c, grid_c = residual(cand)
            if res_c is not None and np.linalg.norm(res_c) < nrm:
                eta0, res, traj, grid = cand, res_c, traj_c, grid_c
                break
            lam *= 0.5
        else:
            return None
    else:
        return None

    m, eta = traj[:, :d], traj[:, d:]
    cost = trajectory_cost(spec, grid, m, -eta)
    return OCSolution(grid=grid, m=m, eta=eta, cost=cost,
                      terminal_residual=float(np.linalg.norm(res)))


def default_start_grid(spec: ModelSpec, nu0, points_per_axis: int = 21):
    """Lattice of initial-adjoint guesses sized by the a-priori bounds."""
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    R = (float(np.linalg.norm(nu0)) + spec.g.bounds["grad_sup"] + spec.T)
    R *= float(np.exp(np.linalg.norm(spec.b, 2) * spec.T))
    axes = [np.linspace(-R, R, points_per_axis) for _ in range(spec.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def enumerate_stationary(spec: ModelSpec, t0, nu0, start_grid=None,
                         steps_per_unit: int = 1000, dedup_tol: float = 1e-5,
                         cost_tie_rel: float = 1e-7, threads: int = 1) -> StationarySet:
    """Multi-start shooting, deduplicated by initial adjoint and sorted by cost."""
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    if start_grid is None:
        start_grid = default_start_grid(spec, nu0)
    start_grid = np.atleast_2d(np.asarray(start_grid, dtype=float))
    if start_grid.size == 0:
        raise InvalidParameter("start grid must be nonempty")

    def run(guess):
        return shoot(spec, t0, nu0, guess, steps_per_unit=steps_per_unit)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, start_grid))
    else:
        results = [run(g) for g in start_grid]

    found = []
    for sol in results:
        if sol is None:
            continue
        if any(np.linalg.norm(sol.eta0 - s.eta0) < dedup_tol for s in found):
            continue
        found.append(sol)
    if not found:
        raise NoStationaryPoint("multi-start shooting found no stationary point")

    found.sort(key=lambda s: s.cost)
    min_cost = found[0].cost
    tie = cost_tie_rel * max(1.0, abs(min_cost))
    mult = 0
    for s in found:
        if s.cost - min_cost <= tie:
            s.classification = "minimizer"
            mult += 1
        else:
            s.classification = "stationary-only"
    return StationarySet(solutions=found, min_cost=min_cost, multiplicity=mult)


# --- discretized-control descent (independent cross-check) ------------------


def discrete_cost_and_gradient(spec: ModelSpec, t0, nu0, beta):
    """Cost and exact gradient of the Euler-discretized control functional.

    beta is piecewise constant on K uniform steps; the gradient is the exact
    adjoint gradient of the discrete functional, so descent on it is free of
    inner discretization mismatch.
    """
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    K, d = beta.shape
    dt = (spec.T - t0) / K
    b = spec.b
    m = np.empty((K + 1, d))
    m[0] = nu0
    for k in range(K):
        m[k + 1] = m[k] + dt * (b @ m[k] + beta[k])
    run = 0.0
    grad_f_vals = np.empty((K, d))
    for k in range(K):
        grad_f_vals[k] = spec.f.gradient(m[k])
        run += dt * (0.5 * beta[k] @ beta[k] + 0.5 * m[k] @ m[k] + spec.f.value(m[k]))
    cost = run + 0.5 * float(m[-1] @ m[-1]) + spec.g.value(m[-1])

    lam = m[-1] + spec.g.gradient(m[-1])
    grad = np.empty_like(beta)
    A = np.eye(d) + dt * b
    for k in range(K - 1, -1, -1):
        grad[k] = dt * (beta[k] + lam)
        lam = dt * (m[k] + grad_f_vals[k]) + A.T @ lam
    return cost, grad


def descend_discrete(spec: ModelSpec, t0, nu0, beta0, max_iter: int = 600,
                     grad_tol: float = 1e-9):
    """Backtracking gradient descent on the discretized functional."""
    beta = np.array(beta0, dtype=float)
    cost, grad = discrete_cost_and_gradient(spec, t0, nu0, beta)
    step = 1.0
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < grad_tol:
            break
        while step > 1e-12:
            cand = beta - step * grad
            c_new, g_new = discrete_cost_and_gradient(spec, t0, nu0, cand)
            if c_new < cost - 0.25 * step * gnorm**2:
                beta, cost, grad = cand, c_new, g_new
                step = min(step * 2.0, 1e3)
                break
            step *= 0.5
        else:
            break
    return beta, cost, grad


def value_function(spec: ModelSpec, t0, nu0, cross_check: bool = True,
                   control_steps: int = 200, n_starts: int = 5,
                   check_rel_tol: float = 1e-4, seed: int = 20240,
                   steps_per_unit: int = 1000, start_grid=None) -> float:
    """Minimal cost over the stationary enumeration.

    Cross-checked against projected gradient descent on a discretized control
    from random starts; disagreement beyond tolerance raises a warning, which
    guards against basins missed by the start lattice.
    """
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    if t0 >= spec.T:
        # empty horizon: nothing to control, only the terminal cost remains
        return float(0.5 * nu0 @ nu0 + spec.g.value(nu0))
    sset = enumerate_stationary(spec, t0, nu0, steps_per_unit=steps_per_unit,
                                start_grid=start_grid)
    v = sset.min_cost
    if cross_check:
        gen = np.random.default_rng(seed)
        scale = float(np.linalg.norm(np.atleast_1d(nu0))) + spec.g.bounds["grad_sup"] + 1.0
        best = np.inf
        for _ in range(n_starts):
            beta0 = gen.uniform(-scale, scale, size=(1, spec.dim)) * np.ones(
                (control_steps, spec.dim))
            beta0 += 0.1 * gen.normal(size=beta0.shape)
            _, c, _ = descend_discrete(spec, t0, nu0, beta0)
            best = min(best, c)
        if abs(best - v) > check_rel_tol * max(1.0, abs(v)) and best < v:
            warnings.warn(
                f"value cross-check disagreement: shooting {v:.6g} vs descent {best:.6g}",
                stacklevel=2)
    return v


def differentiability_probe(spec: ModelSpec, t0, nu0, h: float = 1e-3,
                            gap_factor: float = 10.0, **vf_kwargs):
    """One-sided difference quotients of the value function per axis.

    Verdict "kink" when any axis's one-sided quotients differ by more than a
    heuristic threshold (gap_factor * h, scaled by a local curvature
    estimate); this is a heuristic, not a certificate.
    """
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    vf_kwargs.setdefault("cross_check", False)
    v0 = value_function(spec, t0, nu0, **vf_kwargs)
    lefts, rights = [], []
    verdict = "differentiable"
    for k in range(spec.dim):
        e = np.zeros(spec.dim)
        e[k] = h
        v_p = value_function(spec, t0, nu0 + e, **vf_kwargs)
        v_m = value_function(spec, t0, nu0 - e, **vf_kwargs)
        v_pp = value_function(spec, t0, nu0 + 2 * e, **vf_kwargs)
        right = (v_p - v0) / h
        left = (v0 - v_m) / h
        rights.append(right)
        lefts.append(left)
        # curvature estimate from the smooth side
        curv = abs(v_pp - 2 * v_p + v0) / h**2
        threshold = gap_factor * h * max(1.0, 0.3 * curv)
        if abs(right - left) > threshold:
            verdict = "kink"
    return {"left": np.array(lefts), "right": np.array(rights), "verdict": verdict}


# --- static reduction for terminal-cost-only models --------------------------


def _require_static(spec: ModelSpec):
    if np.any(spec.b != 0.0) or not spec.running_state_cost_vanishes:
        raise InvalidReduction(
            "static reduction needs b = 0 and a vanishing running state cost "
            "(running potential quadratic(c=-1))")


def static_U(spec: ModelSpec, t0, nu0, a) -> float:
    """U(t0, nu0, a) = (T-t0)|a|^2/2 + G(nu0 + (T-t0) a), G(y) = |y|^2/2 + g(y)."""
    _require_static(spec)
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    tau = spec.T - t0
    y = nu0 + tau * a
    return float(0.5 * tau * a @ a + 0.5 * y @ y + spec.g.value(y))


def static_U_minimize(spec: ModelSpec, t0, nu0, scan_radius=None, scan_points: int = 801):
    """All local minimizers of a -> U(t0, nu0, a), exploiting symmetry.

    In dimension 1 the line is scanned and each bracket is polished.  In
    higher dimension the minimizer set lies on the ray through nu0 (or is a
    full sphere when nu0 = 0 and g is radial); the scalar reduction is used.
    Returns (minimizers, min_value, is_sphere).
    """
    _require_static(spec)
    nu0 = np.atleast_1d(np.asarray(nu0, dtype=float))
    tau = spec.T - t0
    if scan_radius is None:
        scan_radius = (float(np.linalg.norm(nu0)) + spec.g.bounds["grad_sup"] + 2.0) / max(tau, 1e-9)

    on_sphere = spec.dim > 1 and np.all(nu0 == 0.0)
    direction = np.zeros(spec.dim)
    if on_sphere or np.all(nu0 == 0.0):
        direction[0] = 1.0
    else:
        direction = nu0 / np.linalg.norm(nu0)

    def U1(s):
        return static_U(spec, t0, nu0, s * direction)

    ss = np.linspace(-scan_radius, scan_radius, scan_points)
    vals = np.array([U1(s) for s in ss])
    minima = []
    for i in range(1, len(ss) - 1):
        if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]:
            res = minimize_scalar(U1, bounds=(ss[i - 1], ss[i + 1]), method="bounded",
                                  options={"xatol": 1e-12})
            s_opt = float(res.x)
            if not any(abs(s_opt - s) < 1e-7 for s, _ in minima):
                minima.append((s_opt, float(res.fun)))
    if not minima:
        raise NoStationaryPoint("static scan found no local minimum")
    best = min(v for _, v in minima)
    keep = [(s, v) for s, v in minima if v - best <= 1e-9 * max(1.0, abs(best))]
    if on_sphere:
        # drop sign duplicates; the full minimizer set is the sphere |a| = s
        keep = [(abs(s), v) for s, v in keep]
        keep = sorted(set(keep))
    minimizers = [s * direction for s, v in keep]
    return minimizers, best, on_sphere


def symmetric_minimizer_root(kappa: float) -> float:
    """Positive root a of 2 a = kappa tanh(a), the nonzero static minimizer."""
    if kappa <= 2:
        raise InvalidParameter("needs kappa > 2")
    return float(brentq(lambda a: 2.0 * a - kappa * np.tanh(a), 1e-8, 5.0 + kappa))
