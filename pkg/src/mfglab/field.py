"""Decoupling field of the empirical-mean system and path simulation.

The vector field u(t, m) with eta_t = u(t, m_t) solves a backward quasilinear
system: for the N-player mean,

    -du_i/dt - nu Lap u_i - (b m - u) . grad u_i - (b^T u)_i = source_i(m)

with nu = sigma^2 / (2N), source = grad F_N and terminal layer grad G_N; the
common-noise variant has nu = eps^2 / 2 and the reminder-free source m +
grad f with terminal m + grad g.  The scheme is explicit (Heun in time,
centered diffusion, upwinded transport) on a truncated tensor grid with
linear-extrapolation ghost nodes, plus one implicit-in-diffusion step at the
first backward level to damp terminal-layer roughness.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CflViolation, InvalidInput, InvalidOracle, InvalidParameter, PdeDiverged
from .numerics import RngStream, SpaceGrid, TimeGrid
from .potentials import ModelSpec, corrected_gradient, reminder


@dataclass
class DecouplingField:
    grid: SpaceGrid
    tgrid: TimeGrid
    values: np.ndarray            # (steps+1, *grid.shape, d)
    metadata: dict = field(default_factory=dict)

    def evaluate_batch(self, t: float, points: np.ndarray) -> np.ndarray:
        """Multilinear in space, linear in time, at query points (n, d)."""
        tg = self.tgrid
        s = (t - tg.t0) / tg.dt
        k = int(np.clip(np.floor(s), 0, tg.steps - 1))
        w = s - k
        level = (1.0 - w) * self.values[k] + w * self.values[k + 1]
        return _interp_space(self.grid, level, points)

    def evaluate(self, t: float, m) -> np.ndarray:
        return self.evaluate_batch(t, np.atleast_2d(np.asarray(m, dtype=float)))[0]


def _interp_space(grid: SpaceGrid, level: np.ndarray, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    idx, frac = [], []
    for ax in range(grid.dim):
        lo, hi, n = grid.axes[ax]
        dx = (hi - lo) / (n - 1)
        s = np.clip((pts[:, ax] - lo) / dx, 0.0, n - 1 - 1e-12)
        i = np.floor(s).astype(int)
        idx.append(i)
        frac.append(s - i)
    if grid.dim == 1:
        i, w = idx[0], frac[0][:, None]
        return (1.0 - w) * level[i] + w * level[i + 1]
    i, j = idx
    wx, wy = frac[0][:, None], frac[1][:, None]
    return ((1.0 - wx) * (1.0 - wy) * level[i, j]
            + wx * (1.0 - wy) * level[i + 1, j]
            + (1.0 - wx) * wy * level[i, j + 1]
            + wx * wy * level[i + 1, j + 1])


def _eval_on_grid(grid: SpaceGrid, fn, d: int) -> np.ndarray:
    coords = grid.meshgrid()
    pts = np.stack([c.ravel() for c in coords], axis=-1)
    out = np.array([fn(p) for p in pts])
    return out.reshape(grid.shape + (d,))


def _laplacian(u: np.ndarray, spacings) -> np.ndarray:
    """Componentwise Laplacian; linear-extrapolation ghosts zero the boundary rows."""
    out = np.zeros_like(u)
    for ax, dx in enumerate(spacings):
        sl = [slice(None)] * u.ndim
        lo, mid, hi = list(sl), list(sl), list(sl)
        lo[ax], mid[ax], hi[ax] = slice(0, -2), slice(1, -1), slice(2, None)
        term = np.zeros_like(u)
        term[tuple(mid)] = (u[tuple(hi)] - 2.0 * u[tuple(mid)] + u[tuple(lo)]) / dx**2
        out += term
    return out


def _upwind_transport(u: np.ndarray, c: np.ndarray, spacings) -> np.ndarray:
    """sum_ax c_ax * D_ax u with the difference direction chosen by sign(c_ax).

    Forward differences where c > 0, backward where c < 0, centered where
    c == 0; the mirrored choice keeps odd symmetry of the update exact on
    symmetric grids.  One-sided differences at the truncation boundary.
    """
    out = np.zeros_like(u)
    for ax, dx in enumerate(spacings):
        fwd = np.empty_like(u)
        bwd = np.empty_like(u)
        sl = [slice(None)] * u.ndim

        cur, nxt = list(sl), list(sl)
        cur[ax], nxt[ax] = slice(0, -1), slice(1, None)
        diff = (u[tuple(nxt)] - u[tuple(cur)]) / dx
        head, tail = list(sl), list(sl)
        head[ax], tail[ax] = slice(0, -1), slice(-1, None)
        fwd[tuple(head)] = diff
        last = list(sl)
        last[ax] = slice(-1, None)
        prev = list(sl)
        prev[ax] = slice(-2, -1)
        fwd[tuple(last)] = (u[tuple(last)] - u[tuple(prev)]) / dx

        bwd[tuple(nxt)] = diff
        first = list(sl)
        first[ax] = slice(0, 1)
        second = list(sl)
        second[ax] = slice(1, 2)
        bwd[tuple(first)] = (u[tuple(second)] - u[tuple(first)]) / dx

        ca = c[..., ax:ax + 1]
        centered = 0.5 * (fwd + bwd)
        Du = np.where(ca > 0, fwd, np.where(ca < 0, bwd, centered))
        out += ca * Du
    return out


def _odd_project(u: np.ndarray, dim: int) -> np.ndarray:
    """Project onto fields odd under m -> -m (node-reversal on every axis)."""
    flipped = np.flip(u, axis=tuple(range(dim)))
    return 0.5 * (u - flipped)


def _implicit_diffusion_matrix(grid: SpaceGrid, coef: float):
    """I - coef * L with the boundary rows of L zeroed (extrapolation ghosts)."""
    mats = []
    for ax in range(grid.dim):
        lo, hi, n = grid.axes[ax]
        dx = (hi - lo) / (n - 1)
        main = np.full(n, -2.0 / dx**2)
        off = np.full(n - 1, 1.0 / dx**2)
        L = sp.diags([off, main, off], [-1, 0, 1], format="lil")
        L[0, :] = 0.0
        L[-1, :] = 0.0
        mats.append(sp.csr_matrix(L))
    if grid.dim == 1:
        L_full = mats[0]
    else:
        n0, n1 = grid.shape
        L_full = sp.kron(mats[0], sp.identity(n1)) + sp.kron(sp.identity(n0), mats[1])
    n_total = int(np.prod(grid.shape))
    return sp.csc_matrix(sp.identity(n_total) - coef * L_full)


def solve_field(spec: ModelSpec, grid: SpaceGrid, tgrid: TimeGrid,
                N: int = None, eps: float = None,
                cfl_diff: float = 0.25, cfl_adv: float = 0.5) -> DecouplingField:
    """Backward finite-difference solve of the decoupling-field system.

    Exactly one of N (players) or eps (common-noise intensity) selects the
    variant.  Stability of the explicit scheme is checked before and during
    stepping; violations raise CflViolation.
    """
    if (N is None) == (eps is None):
        raise InvalidParameter("pass exactly one of N or eps")
    if grid.dim != spec.dim:
        raise InvalidParameter("space grid dimension must match the model")
    d = spec.dim
    if N is not None:
        if spec.sigma <= 0:
            raise InvalidParameter("the N-player field needs sigma > 0")
        nu = spec.sigma**2 / (2.0 * N)
        source_fn = lambda m: corrected_gradient(spec.f, N, m)
        terminal_fn = lambda m: corrected_gradient(spec.g, N, m)
        meta = {"kind": "nplayer", "N": N, "noise_scale": spec.sigma / np.sqrt(N)}
    else:
        if eps <= 0:
            raise InvalidParameter("eps must be positive")
        nu = eps**2 / 2.0
        source_fn = lambda m: m + spec.f.gradient(m)
        terminal_fn = lambda m: m + spec.g.gradient(m)
        meta = {"kind": "common-noise", "eps": eps, "noise_scale": eps}
    meta.update({"diffusion": nu, "model": f"f={spec.f.name}, g={spec.g.name}"})

    spacings = grid.spacings
    dt = tgrid.dt
    for dx in spacings:
        ratio = nu * dt / dx**2
        if ratio > cfl_diff + 1e-12:
            raise CflViolation("diffusion", ratio, cfl_diff)

    coords = grid.meshgrid()
    mgrid = np.stack(coords, axis=-1)                       # (*shape, d)
    bm = np.einsum("ij,...j->...i", spec.b, mgrid)
    source = _eval_on_grid(grid, source_fn, d)
    symmetric = spec.even_data and grid.is_symmetric()

    def check_advection(c):
        cmax = float(np.max(np.abs(c)))
        for dx in spacings:
            ratio = cmax * dt / dx
            if ratio > cfl_adv + 1e-12:
                raise CflViolation("advection", ratio, cfl_adv)

    def rhs(u):
        c = bm - u
        check_advection(c)
        return (nu * _laplacian(u, spacings)
                + _upwind_transport(u, c, spacings)
                + np.einsum("ji,...j->...i", spec.b, u)
                + source)

    steps = tgrid.steps
    values = np.empty((steps + 1,) + grid.shape + (d,))
    # the terminal layer stays exactly the corrected gradient at the nodes;
    # the odd projection (which could move it by an ulp) starts one level in
    u = _eval_on_grid(grid, terminal_fn, d)
    values[steps] = u

    # first backward level: implicit diffusion, explicit transport and source
    A_imp = _implicit_diffusion_matrix(grid, nu * dt)
    lu = spla.splu(A_imp)
    c = bm - u
    check_advection(c)
    expl = u + dt * (_upwind_transport(u, c, spacings)
                     + np.einsum("ji,...j->...i", spec.b, u) + source)
    u = np.stack([lu.solve(expl[..., i].ravel()).reshape(grid.shape)
                  for i in range(d)], axis=-1)
    if symmetric:
        u = _odd_project(u, grid.dim)
    if not np.all(np.isfinite(u)):
        raise PdeDiverged(tgrid.nodes[steps - 1])
    values[steps - 1] = u

    for k in range(steps - 2, -1, -1):
        k1 = rhs(u)
        pred = u + dt * k1
        k2 = rhs(pred)
        u = u + 0.5 * dt * (k1 + k2)
        if symmetric:
            u = _odd_project(u, grid.dim)
        if not np.all(np.isfinite(u)):
            raise PdeDiverged(tgrid.nodes[k])
        values[k] = u

    return DecouplingField(grid=grid, tgrid=tgrid, values=values, metadata=meta)


def stable_time_grid(spec: ModelSpec, grid: SpaceGrid, N: int = None, eps: float = None,
                     safety: float = 0.9, velocity_margin: float = 2.0) -> TimeGrid:
    """Time grid satisfying the explicit-scheme bounds with a safety factor.

    The advection speed is estimated from the terminal layer, inflated by
    `velocity_margin` because the field can steepen backward in time.
    """
    d = spec.dim
    if N is not None:
        nu = spec.sigma**2 / (2.0 * N)
        terminal_fn = lambda m: corrected_gradient(spec.g, N, m)
    else:
        nu = eps**2 / 2.0
        terminal_fn = lambda m: m + spec.g.gradient(m)
    uT = _eval_on_grid(grid, terminal_fn, d)
    coords = grid.meshgrid()
    mgrid = np.stack(coords, axis=-1)
    bm = np.einsum("ij,...j->...i", spec.b, mgrid)
    cmax = velocity_margin * float(np.max(np.abs(bm - uT))) + 1e-12
    dt_bound = np.inf
    for dx in grid.spacings:
        dt_bound = min(dt_bound, 0.25 * dx**2 / max(nu, 1e-300), 0.5 * dx / cmax)
    steps = int(np.ceil(spec.T / (safety * dt_bound)))
    return TimeGrid(0.0, spec.T, max(steps, 8))


def riccati_field_oracle(spec: ModelSpec, tgrid: TimeGrid, N: int = None, eps: float = None):
    """Closed-form affine field u(t, m) = P_t m + r_t for quadratic data.

    P solves Pdot = P^2 - P b - b^T P - A_f backward from A_g, r the linear
    backward ODE rdot = (P - b^T) r - a_f from a_g, where A, a are the affine
    coefficients of the corrected (or, for eps, plain) cost gradients.
    """
    if spec.f.quad_coeffs is None or spec.g.quad_coeffs is None:
        raise InvalidOracle("Riccati oracle needs quadratic f and g")
    if (N is None) == (eps is None):
        raise InvalidParameter("pass exactly one of N or eps")
    d = spec.dim
    I = np.eye(d)
    Cf, kf = spec.f.quad_coeffs
    Cg, kg = spec.g.quad_coeffs
    if N is not None:
        A_f, a_f = (I + Cf / N) @ (I + Cf), (I + Cf / N) @ kf
        A_g, a_g = (I + Cg / N) @ (I + Cg), (I + Cg / N) @ kg
    else:
        A_f, a_f = I + Cf, kf
        A_g, a_g = I + Cg, kg

    b = spec.b
    nodes = tgrid.nodes
    h = -tgrid.dt
    P = np.empty((tgrid.steps + 1, d, d))
    r = np.empty((tgrid.steps + 1, d))
    P[-1], r[-1] = A_g, a_g

    def rhs(state):
        Pm, rm = state
        return (Pm @ Pm - Pm @ b - b.T @ Pm - A_f, (Pm - b.T) @ rm - a_f)

    Pm, rm = A_g.copy(), a_g.copy()
    for k in range(tgrid.steps, 0, -1):
        s1 = rhs((Pm, rm))
        s2 = rhs((Pm + h / 2 * s1[0], rm + h / 2 * s1[1]))
        s3 = rhs((Pm + h / 2 * s2[0], rm + h / 2 * s2[1]))
        s4 = rhs((Pm + h * s3[0], rm + h * s3[1]))
        Pm = Pm + h / 6 * (s1[0] + 2 * s2[0] + 2 * s3[0] + s4[0])
        rm = rm + h / 6 * (s1[1] + 2 * s2[1] + 2 * s3[1] + s4[1])
        Pm = 0.5 * (Pm + Pm.T)
        P[k - 1], r[k - 1] = Pm, rm

    def u(t, m):
        s = np.clip((t - tgrid.t0) / tgrid.dt, 0.0, tgrid.steps - 1e-12)
        k = int(np.floor(s))
        w = s - k
        Pt = (1 - w) * P[k] + w * P[k + 1]
        rt = (1 - w) * r[k] + w * r[k + 1]
        return Pt @ np.atleast_1d(np.asarray(m, dtype=float)) + rt

    return P, r, u


# --- path simulation --------------------------------------------------------


@dataclass
class PathEnsemble:
    tgrid: TimeGrid
    paths: np.ndarray        # (M, steps+1, d)
    controls: np.ndarray     # (M, steps+1, d), realized eta = u(t, m)
    seed: int
    exit_fraction: float
    metadata: dict = field(default_factory=dict)

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1, :]


def simulate_ensemble(fld: DecouplingField, spec: ModelSpec, M: int, seed: int,
                      sim_steps: int = None, noise_off: bool = False,
                      m0_override=None, control_override=None,
                      increments_override=None) -> PathEnsemble:
    """Euler-Maruyama ensemble of the mean process driven by the field.

    Per-path randomness comes from RngStream(seed, path index): for the
    N-player variant each path first draws N initial states (their mean is
    m_0) and then its Brownian increments, so results do not depend on
    scheduling.  States are clamped to the field's domain; the fraction of
    paths that ever exited is reported (> 1% earns a domain-too-small flag).
    """
    if M < 1:
        raise InvalidParameter("need at least one path")
    meta = fld.metadata
    kind = meta.get("kind", "nplayer")
    noise_scale = 0.0 if noise_off else meta.get("noise_scale", 0.0)
    d = spec.dim
    T, t0 = fld.tgrid.T, fld.tgrid.t0
    if sim_steps is None:
        sim_steps = max(int(round(1000 * (T - t0))), 16)
    tg = TimeGrid(t0, T, sim_steps)
    dt = tg.dt
    sq = np.sqrt(dt)

    m0 = np.empty((M, d))
    dW = np.empty((M, sim_steps, d))
    for p in range(M):
        gen = RngStream(seed, p).generator()
        if m0_override is not None:
            m0[p] = np.atleast_1d(np.asarray(m0_override, dtype=float))
        elif kind == "nplayer":
            draws = spec.xi_sampler(gen, meta["N"])
            m0[p] = draws.mean(axis=0)
        else:
            m0[p] = spec.nu0
        dW[p] = sq * gen.normal(size=(sim_steps, d))
    if increments_override is not None:
        dW = np.asarray(increments_override, dtype=float)
        if dW.shape != (M, sim_steps, d):
            raise InvalidInput("increments_override has the wrong shape")

    lows = np.array([ax[0] for ax in fld.grid.axes])
    highs = np.array([ax[1] for ax in fld.grid.axes])

    paths = np.empty((M, sim_steps + 1, d))
    controls = np.empty((M, sim_steps + 1, d))
    paths[:, 0] = np.clip(m0, lows, highs)
    exited = np.zeros(M, dtype=bool)
    exited |= np.any((m0 < lows) | (m0 > highs), axis=1)

    m = paths[:, 0].copy()
    for k in range(sim_steps):
        t = tg.nodes[k]
        if control_override is not None:
            eta = control_override(t, m)
        else:
            eta = fld.evaluate_batch(t, m)
        controls[:, k] = eta
        drift = m @ spec.b.T - eta
        m = m + dt * drift + noise_scale * dW[:, k]
        out = (m < lows) | (m > highs)
        exited |= np.any(out, axis=1)
        np.clip(m, lows, highs, out=m)
        paths[:, k + 1] = m
    tT = tg.nodes[-1]
    controls[:, -1] = (control_override(tT, m) if control_override is not None
                       else fld.evaluate_batch(tT, m))

    exit_fraction = float(np.mean(exited))
    meta_out = dict(meta)
    meta_out["domain_too_small"] = exit_fraction > 0.01
    return PathEnsemble(tgrid=tg, paths=paths, controls=controls, seed=seed,
                        exit_fraction=exit_fraction, metadata=meta_out)


def _batch_value(p, pts):
    if p.quad_coeffs is not None:
        C, k = p.quad_coeffs
        return 0.5 * np.einsum("ni,ij,nj->n", pts, C, pts) + pts @ k
    return np.array([p.value(x) for x in pts])


def _batch_reminder(p, pts):
    if p.quad_coeffs is not None:
        C, k = p.quad_coeffs
        g = pts @ C.T + k
        return (0.5 * np.sum(g * g, axis=1) + np.sum(pts * g, axis=1)
                - _batch_value(p, pts))
    return np.array([reminder(p, x) for x in pts])


def eval_cost_ensemble(ens: PathEnsemble, spec: ModelSpec) -> np.ndarray:
    """Per-path cost of the mean control problem along simulated paths.

    The control is beta = -eta with the realized eta stored in the ensemble;
    the 1/N reminder corrections are included for the N-player variant and
    absent for the common-noise one.
    """
    kind = ens.metadata.get("kind", "nplayer")
    N = ens.metadata.get("N")
    M, K1, d = ens.paths.shape
    nodes = ens.tgrid.nodes
    costs = np.empty(M)
    for p in range(M):
        m = ens.paths[p]
        eta = ens.controls[p]
        run = 0.5 * np.sum(eta**2, axis=1) + 0.5 * np.sum(m**2, axis=1)
        run = run + _batch_value(spec.f, m)
        if kind == "nplayer":
            run = run + _batch_reminder(spec.f, m) / N
        total = float(np.trapezoid(run, nodes))
        mT = m[-1]
        total += 0.5 * float(mT @ mT) + spec.g.value(mT)
        if kind == "nplayer":
            total += reminder(spec.g, mT) / N
        costs[p] = total
    return costs


# --- export -----------------------------------------------------------------

_MAGIC = b"MFGF\x01"


def save_field_binary(fld: DecouplingField, path: str):
    """Binary layout: header (dims, bounds, counts, variant) + float64 payload."""
    meta = fld.metadata
    kind = meta.get("kind", "nplayer")
    param = float(meta.get("N", meta.get("eps", 0.0)))
    model = meta.get("model", "").encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<i", fld.grid.dim))
        for lo, hi, n in fld.grid.axes:
            fh.write(struct.pack("<ddi", lo, hi, n))
        fh.write(struct.pack("<ddi", fld.tgrid.t0, fld.tgrid.T, fld.tgrid.steps))
        fh.write(struct.pack("<bd", 0 if kind == "nplayer" else 1, param))
        fh.write(struct.pack("<i", len(model)))
        fh.write(model)
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def load_field_binary(path: str) -> DecouplingField:
    with open(path, "rb") as fh:
        if fh.read(5) != _MAGIC:
            raise InvalidInput(f"{path} is not a field file")
        (dim,) = struct.unpack("<i", fh.read(4))
        axes = tuple(struct.unpack("<ddi", fh.read(20)) for _ in range(dim))
        t0, T, steps = struct.unpack("<ddi", fh.read(20))
        kind_flag, param = struct.unpack("<bd", fh.read(9))
        (mlen,) = struct.unpack("<i", fh.read(4))
        model = fh.read(mlen).decode()
        grid = SpaceGrid(axes)
        tgrid = TimeGrid(t0, T, steps)
        shape = (steps + 1,) + grid.shape + (dim,)
        values = np.frombuffer(fh.read(), dtype="<f8").reshape(shape).copy()
    meta = {"kind": "nplayer" if kind_flag == 0 else "common-noise", "model": model}
    if kind_flag == 0:
        meta["N"] = int(param)
    else:
        meta["eps"] = param
    return DecouplingField(grid=grid, tgrid=tgrid, values=values, metadata=meta)


def export_field_csv_slice(fld: DecouplingField, path: str, time_index: int = 0):
    d = fld.grid.dim
    coords = fld.grid.meshgrid()
    pts = np.stack([c.ravel() for c in coords], axis=-1)
    level = fld.values[time_index].reshape(-1, d)
    header = ",".join([f"m{i+1}" for i in range(d)] + [f"u{i+1}" for i in range(d)])
    np.savetxt(path, np.hstack([pts, level]), delimiter=",", header=header, comments="")


def export_ensemble_csv(ens: PathEnsemble, path: str):
    M, K1, d = ens.paths.shape
    nodes = ens.tgrid.nodes
    cols = (["path", "t"] + [f"m{i+1}" for i in range(d)] + [f"eta{i+1}" for i in range(d)])
    rows = np.empty((M * K1, 2 + 2 * d))
    rows[:, 0] = np.repeat(np.arange(M), K1)
    rows[:, 1] = np.tile(nodes, M)
    rows[:, 2:2 + d] = ens.paths.reshape(-1, d)
    rows[:, 2 + d:] = ens.controls.reshape(-1, d)
    np.savetxt(path, rows, delimiter=",", header=",".join(cols), comments="")
