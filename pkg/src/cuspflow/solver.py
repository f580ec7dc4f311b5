"""Backward-Euler/Newton integrator for the radial log fast-diffusion flow.

The conformal factor ``u = exp(2 v)`` of a Ricci flow on a disc solves
``dv/dt = exp(-2 v) (v'' + v'/r) = -K``.  Its diffusion coefficient
``exp(-2 v)`` spans many decades across a capped cusp, so every step is fully
implicit; the tridiagonal Newton system is solved with a banded LU.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from . import barriers
from .metrics import (
    CappedCusp,
    Cusp,
    DomainError,
    LaplacianStencil,
    RadialGrid,
    Sampled,
    Sphere,
    eval_v,
)

log = logging.getLogger(__name__)

V_CEILING = 1e3
EPS = float(np.finfo(float).eps)


class StepFailure(RuntimeError):
    """Newton did not converge even at the smallest allowed time step."""

    def __init__(self, message, t=None, residual=None):
        super().__init__(message)
        self.t = t
        self.residual = residual


class InvariantViolation(RuntimeError):
    """The discrete state left the set the flow is supposed to preserve."""


# ---------------------------------------------------------------------------
# state and boundary data


@dataclass(frozen=True, eq=False)
class FlowState:
    grid: RadialGrid
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError("state needs one value per grid node")
        if not np.all(np.isfinite(v)):
            raise InvariantViolation(f"non-finite v at t={self.t}")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def r(self):
        return self.grid.nodes

    def profile(self):
        return Sampled(self.grid, self.v)


@dataclass(frozen=True)
class ScaledCusp:
    """Dirichlet ``u(R) = (1 + 2t) u_base(R)``, the homothetic hyperbolic flow."""

    base: object = field(default_factory=Cusp)

    def value(self, r_out, t):
        return float(eval_v(self.base, r_out)) + 0.5 * math.log1p(2.0 * t)


@dataclass(frozen=True)
class ExactCigar:
    """Dirichlet data from the exact evolution of the cigar tangent at ``r0``."""

    r0: float

    def value(self, r_out, t):
        return barriers.cigar_flow(self.r0, r_out, t)


@dataclass(frozen=True)
class ShrinkingSphere:
    """Dirichlet data ``u(R, t) = (1 - 2 K t) u_0(R)`` of a round shrinker."""

    beta: float
    K: float

    def value(self, r_out, t):
        if not t < 0.5 / self.K:
            raise DomainError("shrinking sphere has collapsed (t >= 1/(2K))")
        return float(eval_v(Sphere(self.beta, self.K), r_out)) + 0.5 * math.log1p(-2.0 * self.K * t)


@dataclass(frozen=True)
class Frozen:
    """Dirichlet data held at its initial value."""

    v_out: float

    def value(self, r_out, t):
        return self.v_out


@dataclass(frozen=True)
class SolverConfig:
    """Step-size and Newton controls.

    ``dt_rel_max`` caps the step at ``dt_rel_max * t`` (but never below
    ``dt_init``), which keeps the relative time resolution uniform through the
    fast early transient.
    """

    dt_init: float = 1e-8
    dt_min: float = 1e-14
    dt_max: float = 1e-2
    dt_rel_max: float = 1e-3
    newton_tol: float = 1e-10
    newton_max_iters: int = 12
    grow: float = 2.0
    shrink: float = 0.5
    grow_below_iters: int = 4

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if not 0 < self.newton_tol <= 1e-4:
            raise ValueError("newton_tol must lie in (0, 1e-4]")
        if not (self.grow >= 1.0 and 0 < self.shrink < 1.0):
            raise ValueError("step_safety factors need grow >= 1 > shrink > 0")

    def dt_cap(self, t):
        cap = self.dt_max
        if self.dt_rel_max is not None:
            cap = min(cap, max(self.dt_rel_max * t, self.dt_init))
        return cap


@dataclass
class SolverStats:
    steps: int = 0
    newton_iters: int = 0
    rejected: int = 0
    dt_min_used: float = math.inf
    dt_max_used: float = 0.0

    def record(self, dt, iters):
        self.steps += 1
        self.newton_iters += iters
        self.dt_min_used = min(self.dt_min_used, dt)
        self.dt_max_used = max(self.dt_max_used, dt)

    def as_dict(self):
        return {
            "steps": self.steps,
            "newton_iters": self.newton_iters,
            "rejected": self.rejected,
            "dt_min": self.dt_min_used if self.steps else None,
            "dt_max": self.dt_max_used if self.steps else None,
        }


# ---------------------------------------------------------------------------
# operations


def init_state(profile, grid):
    """Sample ``profile`` at the grid nodes at ``t = 0``."""
    v = np.asarray(eval_v(profile, grid.nodes), dtype=float)
    if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > V_CEILING:
        raise DomainError("initial profile is singular on the grid (|v| > 1e3 or non-finite)")
    return FlowState(grid, v, 0.0)


def _newton(v_old, dt, stencil, v_bc, cfg):
    """Solve ``w - v_old - dt exp(-2w) L w = 0`` with ``w[-1] = v_bc``.

    Returns ``(w, iters, residual)``; ``w`` is None on failure.
    """
    n = v_old.size
    w = v_old.copy()
    w[-1] = v_bc
    ab = np.zeros((3, n))
    res_norm = math.inf
    tol = cfg.newton_tol * max(1.0, float(np.max(np.abs(v_old))))
    # rounding floor of dt exp(-2w) L w; dominant near a deep cap on a fine grid
    row = np.abs(stencil.diag) + np.abs(stencil.upper) + np.abs(stencil.lower)
    for it in range(1, cfg.newton_max_iters + 1):
        Lw = stencil.diag * w
        Lw[:-1] += stencil.upper[:-1] * w[1:]
        Lw[1:] += stencil.lower[1:] * w[:-1]
        with np.errstate(over="ignore", invalid="ignore"):
            d = np.exp(-2.0 * w)
            F = w - v_old - dt * d * Lw
        F[-1] = w[-1] - v_bc
        res_norm = float(np.max(np.abs(F)))
        if not math.isfinite(res_norm):
            return None, it, res_norm
        floor = 64.0 * EPS * dt * d * row * np.abs(w)
        if np.all(np.abs(F) <= tol + floor):
            return w, it - 1, res_norm
        # J = I - dt [diag(-2 d Lw) + diag(d) L]
        ab[1] = 1.0 - dt * (d * stencil.diag - 2.0 * d * Lw)
        ab[0, 1:] = -dt * d[:-1] * stencil.upper[:-1]
        ab[2, :-1] = -dt * d[1:] * stencil.lower[1:]
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        try:
            dw = solve_banded((1, 1), ab, -F, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return None, it, res_norm
        # limit very large updates; exp(-2w) makes full steps overshoot
        big = float(np.max(np.abs(dw)))
        if big > 2.0:
            dw *= 2.0 / big
        w = w + dw
        if not np.all(np.isfinite(w)):
            return None, it, res_norm
    return None, cfg.newton_max_iters, res_norm


class Integrator:
    """Stateful driver holding the stencil, current step size and statistics."""

    def __init__(self, state, bc, cfg=None, check_floor=None):
        self.state = state
        self.bc = bc
        self.cfg = cfg or SolverConfig()
        self.stencil = LaplacianStencil.build(state.grid.nodes)
        self.dt = self.cfg.dt_init
        self.stats = SolverStats()
        # optional lower bound on v checked on the inner half of the grid
        self.check_floor = check_floor
        self._inner = state.grid.nodes <= 0.5 * state.grid.r_out

    def step(self, dt_limit=None):
        """Advance one accepted step (at most ``dt_limit``); returns the new state."""
        cfg = self.cfg
        st = self.state
        dt = min(self.dt, cfg.dt_cap(st.t))
        if dt_limit is not None:
            dt = min(dt, dt_limit)
        dt = max(dt, min(cfg.dt_min, dt_limit if dt_limit is not None else cfg.dt_min))
        while True:
            t_new = st.t + dt
            w, iters, res = _newton(st.v, dt, self.stencil, self.bc.value(st.grid.r_out, t_new), cfg)
            if w is not None:
                break
            self.stats.rejected += 1
            log.debug("rejected dt=%.3g at t=%.6g (residual %.3g)", dt, st.t, res)
            if dt <= cfg.dt_min * (1 + 1e-12):
                raise StepFailure(
                    f"Newton failed at t={st.t:.6g} with dt at dt_min (residual {res:.3g})", st.t, res
                )
            dt = max(dt * cfg.shrink, cfg.dt_min)
            self.dt = dt
        if not np.all(np.isfinite(w)):
            raise InvariantViolation(f"non-finite v after step to t={t_new}")
        if self.check_floor is not None:
            low = float(np.min(w[self._inner]))
            if low < self.check_floor:
                raise InvariantViolation(f"v fell to {low:.6g} < {self.check_floor} at t={t_new:.6g}")
        self.stats.record(dt, iters)
        if iters < cfg.grow_below_iters and (dt_limit is None or dt < dt_limit * (1 - 1e-12)):
            self.dt = min(dt * cfg.grow, cfg.dt_max)
        elif dt_limit is None or dt < dt_limit * (1 - 1e-12):
            self.dt = dt
        self.state = FlowState(st.grid, w, t_new)
        return self.state

    def advance_to(self, t_target):
        st = self.state
        while st.t < t_target * (1 - 1e-14):
            st = self.step(dt_limit=t_target - st.t)
        if st.t != t_target:
            st = replace(st, t=float(t_target))
            self.state = st
        return st


def step(state, bc, cfg=None, dt=None):
    """Take one backward-Euler step from ``state``.

    ``dt`` defaults to ``cfg.dt_init`` and is not subject to the
    proportional-to-time cap.  Newton failures halve the step down to
    ``cfg.dt_min``; the returned state's ``t`` reports the step actually
    taken.
    """
    # an explicit step ignores the proportional-to-time cap
    cfg = replace(cfg or SolverConfig(), dt_rel_max=None)
    integ = Integrator(state, bc, cfg)
    integ.dt = cfg.dt_init if dt is None else dt
    if not cfg.dt_min <= integ.dt <= cfg.dt_max:
        raise ValueError("dt outside [dt_min, dt_max]")
    return integ.step(dt_limit=integ.dt)


def _floor_for(profile, grid):
    # capped cusps stay above e^2 (v >= 1) when the outer rim is fixed by the cusp
    if isinstance(profile, CappedCusp) and grid.r_out <= 1 - 1e-3:
        return 1.0 - 1e-6
    return None


def run(profile, grid, bc, cfg=None, t_end=None, sample_times=(), callback=None):
    """Integrate from ``profile`` and return the states at ``sample_times``.

    The integrator lands exactly on every sample time.  ``callback(state)`` is
    invoked at each sample if given.  The returned list carries the solver
    statistics as attribute ``stats`` on a :class:`Trajectory`.
    """
    samples = [float(s) for s in sample_times]
    if any(b <= a for a, b in zip(samples[:-1], samples[1:])):
        raise ValueError("sample_times must be strictly increasing")
    if t_end is None:
        t_end = samples[-1] if samples else 0.0
    if samples and (samples[0] <= 0 or samples[-1] > t_end):
        raise ValueError("sample_times must lie in (0, t_end]")
    state = init_state(profile, grid)
    integ = Integrator(state, bc, cfg, check_floor=_floor_for(profile, grid))
    out = Trajectory()
    for ts in samples:
        try:
            st = integ.advance_to(ts)
        except StepFailure as exc:
            raise StepFailure(f"{exc} (while advancing to t={ts})", exc.t, exc.residual) from exc
        out.append(st)
        if callback is not None:
            callback(st)
    if t_end > (samples[-1] if samples else 0.0):
        integ.advance_to(t_end)
    out.stats = integ.stats
    return out


class Trajectory(list):
    """List of sampled :class:`FlowState` with solver statistics attached."""

    stats: SolverStats

    @property
    def times(self):
        return np.array([s.t for s in self])


def run_fixed_dt(profile, grid, bc, dt, t_end):
    """Integrate with a constant step ``dt`` (last step trimmed to land on ``t_end``)."""
    cfg = SolverConfig(dt_init=dt, dt_min=min(dt, 1e-14), dt_max=dt, dt_rel_max=None, grow=1.0)
    integ = Integrator(init_state(profile, grid), bc, cfg)
    return integ.advance_to(t_end)


def convergence_study(profile, bc, t_probe, grid_sizes, exact, grid_factory, dt_coeff=0.05):
    """Observed spatial order of the max-node error under grid refinement.

    Each grid of ``n`` nodes is integrated with ``dt = dt_coeff / (n - 1)^2``
    so the first-order time error scales like the second-order spatial error.
    ``exact(r, t)`` returns the exact ``v``; ``grid_factory(n)`` builds the
    grid.  Returns ``(order, sizes, errors)``; the order is the least-squares
    slope of ``log error`` against ``log (n - 1)``.
    """
    sizes = sorted(int(n) for n in grid_sizes)
    if len(set(sizes)) < 3:
        raise ValueError("convergence study needs at least 3 distinct grid sizes")
    errors = []
    for n in sizes:
        grid = grid_factory(n)
        dt = dt_coeff / (n - 1) ** 2
        st = run_fixed_dt(profile, grid, bc, dt, t_probe)
        err = np.max(np.abs(st.v[:-1] - exact(grid.nodes[:-1], t_probe)))
        errors.append(float(err))
    x = np.log(np.array(sizes, dtype=float) - 1.0)
    y = np.log(np.array(errors))
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope), sizes, errors
