"""Li-Yau type quantities for ``v = log(u) / 2`` along the flow.

With ``f = log v`` (defined because ``v >= 1`` on capped cusps) the
differential Harnack quantity can be written purely spatially as either

    F = |grad f|_u^2 + K t / v                  ("form2")
    F = (1 - t) |grad f|_u^2 - t lap_u f        ("form4")

which agree identically because ``lap_u f + |grad f|_u^2 = -K / v``.  An upper
bound on ``F`` is what turns into ``K <= C v / t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .barriers import _check_r0, cigar_tangency
from .metrics import resolved_gradient, resolved_laplacian, resolved_nodes

FORMS = ("form2", "form4")


class HarnackPreconditionError(ValueError):
    pass


class WindowInfeasible(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# static bound on the initial data


def cusp_gradient_quantity(r):
    """``|grad log v|_h^2 = (log r + 1)^2 / (log|r log r|)^2`` on the cusp."""
    r = np.asarray(r, dtype=float)
    return cusp_gradient_quantity_log(-np.log(r))


def cusp_gradient_quantity_log(L):
    """Same quantity as a function of ``L = -log r``; usable far below double range in r."""
    L = np.asarray(L, dtype=float)
    return (L - 1.0) ** 2 / (L - np.log(L)) ** 2


def cigar_gradient_quantity(r0, r):
    """``|grad log v|_u^2`` on the cap of the capped cusp with tangency radius ``r0``."""
    tan = cigar_tangency(r0)
    r = np.asarray(r, dtype=float)
    two_v = math.log(tan.eps) - np.log(tan.delta + r * r)
    return 4.0 * r * r / ((tan.delta + r * r) * tan.eps * two_v**2)


def gradient_bound_static(r0, n_samples=2000):
    """Supremum over ``(0, 1)`` of ``|grad log v|_u^2`` for the capped cusp.

    Raises AssertionError if the cap part fails to increase with ``r``.
    """
    L0 = _check_r0(r0)
    n = max(int(n_samples), 10)
    r_cap = r0 * np.exp(np.linspace(math.log(1e-6), 0.0, n))
    F_cap = cigar_gradient_quantity(r0, r_cap)
    if np.any(np.diff(F_cap) <= 0):
        raise AssertionError("cap part of the gradient quantity is not increasing in r")
    L = np.linspace(1e-9, L0, n)
    F_cusp = cusp_gradient_quantity_log(L)
    return float(max(F_cap.max(), F_cusp.max()))


def cusp_gradient_sup():
    """Supremum of the cusp-only curve over ``L = -log r > 0``."""
    from scipy import optimize

    res = optimize.minimize_scalar(lambda L: -float(cusp_gradient_quantity_log(L)),
                                   bounds=(1.5, 100.0), method="bounded",
                                   options={"xatol": 1e-10})
    return -float(res.fun)


# ---------------------------------------------------------------------------
# fields along a trajectory


@dataclass(frozen=True, eq=False)
class HarnackField:
    grid: object
    F: np.ndarray
    t: float
    form: str
    mask: np.ndarray

    def sup(self):
        return float(np.max(self.F[self.mask]))


def _pieces(state, region_radius):
    r = state.grid.nodes
    v = np.asarray(state.v, dtype=float)
    mask = r <= region_radius
    mask[-1] = False
    if np.any(v[mask] < 1.0):
        raise HarnackPreconditionError("v < 1 in the evaluation region; log v is not admissible")
    nodes = resolved_nodes(r, v)
    dv = resolved_gradient(r, v, nodes=nodes)
    e2v = np.exp(-2.0 * v)
    grad2 = e2v * (dv / v) ** 2
    return r, v, mask, e2v, grad2, nodes


def gradient_field(state, region_radius=None):
    """``|grad log v|_u^2`` at the nodes inside ``region_radius`` (NaN elsewhere)."""
    if region_radius is None:
        region_radius = 0.5 * state.grid.r_out
    r, v, mask, e2v, grad2, _ = _pieces(state, region_radius)
    return np.where(mask, grad2, np.nan), mask


def harnack_F(state, form="form2", t=None, region_radius=None):
    """The Li-Yau quantity on the inner region of the grid.

    ``t`` overrides the state's own time stamp (used for re-based windows).
    The default region is the inner half of the grid.
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    t = state.t if t is None else t
    if not t > 0:
        raise HarnackPreconditionError("Harnack quantity needs t > 0")
    if region_radius is None:
        region_radius = 0.5 * state.grid.r_out
    r, v, mask, e2v, grad2, nodes = _pieces(state, region_radius)
    if form == "form2":
        K = -e2v * resolved_laplacian(r, v, nodes=nodes)
        F = grad2 + K * t / v
    else:
        lap_f = e2v * resolved_laplacian(r, np.log(v), nodes=nodes)
        F = (1.0 - t) * grad2 - t * lap_f
    return HarnackField(state.grid, np.where(mask, F, np.nan), t, form, mask)


def rebased_ratio(state, t1, region_radius=0.25):
    """Sup over ``r <= region_radius`` of ``(t - t1) K / v``; returns ``(sup, r_at)``."""
    r = state.grid.nodes
    v = np.asarray(state.v, dtype=float)
    K = -np.exp(-2.0 * v) * resolved_laplacian(r, v)
    mask = r <= region_radius
    q = (state.t - t1) * K[mask] / v[mask]
    j = int(np.argmax(q))
    return float(q[j]), float(r[mask][j])


@dataclass(frozen=True)
class LiYauResult:
    sup: float
    t1: float
    t_at: float
    r_at: float
    windows: tuple
    max_v_ratio: float


def liyau_conclusion_check(trajectory, region_radius=0.25, window_ratio=17.0 / 16.0):
    """Sup of the re-based ``(t - t1) K / v`` over ``B_region`` and valid windows.

    A window starts at any sampled ``t1`` and covers ``[t1, window_ratio t1]``;
    it is valid when ``max_{B_{1/2}} v <= 2 / t1`` at every sample inside it,
    which is the smallness condition ``t0 <= 1 / (8 max v)`` for
    ``t0 = t1 / 16``.  Only windows with at least one sample after ``t1`` are
    used.

    Returns
    -------
    LiYauResult
        ``windows`` lists ``(t1, sup_in_window, max t1 * v / 2)`` per valid
        window; ``max_v_ratio`` is the largest ``t1 max v / 2`` seen (<= 1).
    """
    if region_radius > 0.25:
        raise ValueError("region radius must be <= 1/4")
    states = sorted(trajectory, key=lambda s: s.t)
    best = (-math.inf, math.nan, math.nan, math.nan)
    windows = []
    worst_ratio = 0.0
    for i, s1 in enumerate(states):
        t1 = s1.t
        if t1 <= 0:
            continue
        inside = [s for s in states[i:] if s.t <= window_ratio * t1 * (1 + 1e-12)]
        if len(inside) < 2:
            continue
        ratios = []
        for s in inside:
            half = s.grid.nodes <= 0.5
            ratios.append(t1 * float(np.max(s.v[half])) / 2.0)
        if max(ratios) > 1.0:
            continue
        worst_ratio = max(worst_ratio, max(ratios))
        w_sup = -math.inf
        for s in inside[1:]:
            q, r_at = rebased_ratio(s, t1, region_radius)
            w_sup = max(w_sup, q)
            if q > best[0]:
                best = (q, t1, s.t, r_at)
        windows.append((t1, w_sup, max(ratios)))
    if not windows:
        raise WindowInfeasible("no sampled window satisfies max v <= 2 / t1 on B_{1/2}")
    return LiYauResult(best[0], best[1], best[2], best[3], tuple(windows), worst_ratio)


def window_times(t1_values, ratio=17.0 / 16.0, per_window=4):
    """Sample times covering each window ``[t1, ratio t1]`` with ``per_window`` steps."""
    out = set()
    for t1 in t1_values:
        for k in range(per_window + 1):
            out.add(round(t1 * (1.0 + (ratio - 1.0) * k / per_window), 15))
    return sorted(out)
