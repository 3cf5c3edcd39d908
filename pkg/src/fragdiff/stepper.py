"""Time integration: explicit RK4 and IMEX (implicit diffusion) Euler.

The IMEX step treats the stiff diffusion implicitly and the reaction
explicitly:

    f* = f + dt * Q(f),      (I - dt * d_i * Lap_h) f_new,i = f*_i.

Each per-species system is an M-matrix; it is factorized once per step
size with a no-pivot sparse LU in natural ordering, so the triangular
substitutions involve only nonnegative updates and the solve maps
nonnegative stages to nonnegative states exactly, also in floating
point.  Residuals are verified against a 1e-12 contract after every
solve.

Negativity policies: ``reject_and_halve`` retries a failed step with half
the step size (flooring at ``dt_min``); ``clip_to_zero`` clamps negative
entries and accounts for every clip event and the total clipped mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import grid as gridmod
from . import reaction
from .errors import (
    CflViolationError,
    DomainError,
    LinearSolveError,
    NumericalAbortError,
)

REJECT_AND_HALVE = "reject_and_halve"
CLIP_TO_ZERO = "clip_to_zero"
SCHEMES = ("rk4_explicit", "imex_euler")

_RESIDUAL_TOL = 1e-12


@dataclass
class StepperConfig:
    scheme: str = "imex_euler"
    dt: float = 1e-3
    t_end: float = 1.0
    negativity_policy: str = REJECT_AND_HALVE
    dt_min: float = 1e-9

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.negativity_policy not in (REJECT_AND_HALVE, CLIP_TO_ZERO):
            raise DomainError(f"unknown negativity policy {self.negativity_policy!r}")
        if self.dt <= 0 or self.t_end < 0 or self.dt_min <= 0:
            raise DomainError("dt and dt_min must be positive, t_end nonnegative")


@dataclass
class SimState:
    t: float = 0.0
    step_index: int = 0
    last_dt: float = 0.0
    rejected_steps: int = 0
    clip_events: int = 0
    clipped_mass: float = 0.0


@dataclass
class Trajectory:
    """Sampled states of one run: ``fields[k]`` is the stack at ``times[k]``."""

    grid: gridmod.GridSpec
    eps: float
    times: list[float] = field(default_factory=list)
    fields: list[np.ndarray] = field(default_factory=list)
    state: SimState = field(default_factory=SimState)

    @property
    def terminal(self):
        return self.fields[-1]


class _StepRejected(Exception):
    pass


def _abort_with_state(message, t, step_index, traj, F):
    """Abort error carrying the partial trajectory so callers can flush it."""
    if traj.times[-1] != t:
        traj.times.append(t)
        traj.fields.append(F.copy())
    exc = NumericalAbortError(message, t=t, step_index=step_index)
    exc.trajectory = traj
    return exc


def cfl_limit(grid, ks):
    """Largest explicit-diffusion step: ``h_min**2 / (2 * dim * max_i d_i)``."""
    hmin = min(grid.h)
    return hmin * hmin / (2.0 * grid.dim * float(np.max(ks.d)))


def _laplacian_matrix(grid):
    """Sparse Neumann Laplacian matching :func:`fragdiff.grid.laplacian_neumann`."""

    def lap1d(m, h):
        main = np.full(m, -2.0)
        main[0] = main[-1] = -1.0
        off = np.ones(m - 1)
        return scipy.sparse.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)

    if grid.dim == 1:
        return lap1d(grid.shape[0], grid.h[0])
    lx = lap1d(grid.shape[0], grid.h[0])
    ly = lap1d(grid.shape[1], grid.h[1])
    ix = scipy.sparse.identity(grid.shape[0], format="csr")
    iy = scipy.sparse.identity(grid.shape[1], format="csr")
    return scipy.sparse.kron(lx, iy, format="csr") + scipy.sparse.kron(ix, ly, format="csr")


class DiffusionSolver:
    """Cached no-pivot LU factorizations of ``I - dt * d_i * Lap_h``."""

    def __init__(self, grid, ks):
        self.grid = grid
        self.ks = ks
        self._lap = _laplacian_matrix(grid).tocsc()
        self._eye = scipy.sparse.identity(grid.ncells, format="csc")
        self._factors = {}

    def _factorize(self, dt):
        factors = []
        for d in self.ks.d:
            A = (self._eye - (dt * float(d)) * self._lap).tocsc()
            lu = scipy.sparse.linalg.splu(
                A, permc_spec="NATURAL", diag_pivot_thresh=0.0,
            )
            factors.append((A, lu))
        return factors

    def solve(self, stage, dt):
        """Solve the per-species implicit systems; verifies the residual."""
        if dt not in self._factors:
            self._factors[dt] = self._factorize(dt)
        out = np.empty_like(stage)
        flat = stage.reshape(stage.shape[0], -1)
        outf = out.reshape(out.shape[0], -1)
        for i, (A, lu) in enumerate(self._factors[dt]):
            b = flat[i]
            x = lu.solve(b)
            resid = np.max(np.abs(A @ x - b))
            if resid > _RESIDUAL_TOL * max(1.0, np.max(np.abs(b))):
                x = x + lu.solve(b - A @ x)
                resid = np.max(np.abs(A @ x - b))
                if resid > _RESIDUAL_TOL * max(1.0, np.max(np.abs(b))):
                    raise LinearSolveError(
                        f"implicit solve residual {resid:g} above contract"
                    )
            outf[i] = x
        return out


def _negate_mass(grid, F):
    """Weighted mass of the negative part, for clip accounting."""
    neg = np.minimum(F, 0.0)
    i1 = np.arange(1, F.shape[0] + 1, dtype=float)
    return -float(np.sum(i1[(slice(None),) + (None,) * (F.ndim - 1)] * neg)) * grid.cell_volume


def step_imex(grid, ks, F, dt, eps, solver):
    """One IMEX Euler step; returns the candidate state (no policy applied)."""
    Q = reaction.q_field(F, ks, eps)
    stage = F + dt * Q
    return solver.solve(stage, dt)


def step_rk4(grid, ks, F, dt, eps, policy, state=None):
    """One classical RK4 step on the full right-hand side.

    Raises :class:`CflViolationError` when ``dt`` exceeds the diffusion
    stability limit, and :class:`_StepRejected` (internal) when a stage
    turns negative under the rejecting policy.
    """
    limit = cfl_limit(grid, ks)
    if dt > limit:
        raise CflViolationError(dt, limit)
    d_col = ks.d.reshape((ks.n,) + (1,) * grid.dim)

    def rhs(Y):
        if np.min(Y) < 0.0:
            if policy == REJECT_AND_HALVE:
                raise _StepRejected
            clipped = _negate_mass(grid, Y)
            if state is not None and clipped > 0.0:
                state.clip_events += 1
                state.clipped_mass += clipped
            Y = np.maximum(Y, 0.0)
        lap = np.stack([gridmod.laplacian_neumann(grid, Y[i]) for i in range(ks.n)])
        return d_col * lap + reaction.q_field(Y, ks, eps)

    k1 = rhs(F)
    k2 = rhs(F + 0.5 * dt * k1)
    k3 = rhs(F + 0.5 * dt * k2)
    k4 = rhs(F + dt * k3)
    return F + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_simulation(grid, ks, F0, cfg, eps=0.0, cadence=10, t0=0.0):
    """Integrate from ``t0`` to ``cfg.t_end`` and sample every ``cadence`` steps.

    The trajectory always contains the initial and the final state.  The
    loop is fully deterministic: fixed reduction orders, no threading, and
    a rejected step always retries with exactly half the step size.
    """
    F = np.array(F0, dtype=float, copy=True)
    if np.any(F < 0):
        raise DomainError("initial data contains negative entries")
    traj = Trajectory(grid=grid, eps=eps)
    state = traj.state
    state.t = t0
    solver = DiffusionSolver(grid, ks) if cfg.scheme == "imex_euler" else None
    traj.times.append(t0)
    traj.fields.append(F.copy())

    t = t0
    guard = 1e-12 * max(1.0, abs(cfg.t_end))
    while t < cfg.t_end - guard:
        dt_try = min(cfg.dt, cfg.t_end - t)
        while True:
            try:
                if cfg.scheme == "imex_euler":
                    cand = step_imex(grid, ks, F, dt_try, eps, solver)
                else:
                    cand = step_rk4(grid, ks, F, dt_try, eps, cfg.negativity_policy, state)
            except _StepRejected:
                cand = None
            if cand is not None and not np.all(np.isfinite(cand)):
                raise _abort_with_state(
                    f"non-finite state at t={t:g} (dt={dt_try:g})",
                    t, state.step_index, traj, F,
                )
            if cand is not None and np.min(cand) < 0.0:
                if cfg.negativity_policy == CLIP_TO_ZERO:
                    state.clip_events += 1
                    state.clipped_mass += _negate_mass(grid, cand)
                    cand = np.maximum(cand, 0.0)
                else:
                    cand = None
            if cand is not None:
                break
            state.rejected_steps += 1
            dt_try *= 0.5
            if dt_try < cfg.dt_min:
                raise _abort_with_state(
                    f"step size fell below dt_min={cfg.dt_min:g} at t={t:g}",
                    t, state.step_index, traj, F,
                )
        F = cand
        t += dt_try
        state.t = t
        state.last_dt = dt_try
        state.step_index += 1
        if state.step_index % cadence == 0 and t < cfg.t_end - guard:
            traj.times.append(t)
            traj.fields.append(F.copy())

    if traj.times[-1] != t:
        traj.times.append(t)
        traj.fields.append(F.copy())
    state.t = t
    return traj


# -- checkpointing ---------------------------------------------------------


def checkpoint_save(path, grid, F, t, config_echo=None):
    """Persist state as a species CSV with full round-trip float precision."""
    meta = {"t": repr(float(t))}
    if config_echo is not None:
        meta["config_json"] = json.dumps(config_echo, sort_keys=True)
    gridmod.write_species_csv(path, grid, F, metadata=meta)


def checkpoint_load(path):
    """Load ``(grid, F, t, config_echo)`` written by :func:`checkpoint_save`."""
    grid, values, meta = gridmod.read_species_csv(path)
    t = float(meta.get("t", "0.0"))
    cfg = json.loads(meta["config_json"]) if "config_json" in meta else None
    return grid, values, t, cfg
