"""Explicit barriers for the contracting cusp.

Three families of closed-form metrics are compared against the cusp
``h = 1 / (r log r)^2``:

* cigars ``eps / (delta + r^2)`` touching ``h`` from below at a circle
  ``r = r0 < 1/e``; their envelope is ``h`` itself;
* the exact Ricci-flow evolution of those cigars, whose value at the origin
  gives a lower bound for the contracting flow there;
* round spheres ``beta^2 / (1 + beta^2 K r^2 / 4)^2`` touching ``alpha^2 h``
  from below, used as upper barriers whose first contact with a solution
  certifies a curvature lower bound.

Most quantities are parametrised by ``L = -log r0`` which stays well
conditioned in both limits ``r0 -> 0`` and ``r0 -> 1/e``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .metrics import E_INV, CappedCusp, Cigar, Cusp, DomainError, Sampled, Sphere, eval_v

# defaults satisfying 1/32 > 2 mu^2 / alpha > 1/c1
DEFAULT_ALPHA = 1.05
DEFAULT_MU = 0.12
DEFAULT_C1 = 40.0


class TouchViolation(AssertionError):
    def __init__(self, message, r=None, excess=None):
        super().__init__(message)
        self.r = r
        self.excess = excess


class PreconditionError(ValueError):
    pass


class SearchFailure(RuntimeError):
    pass


def _check_r0(r0):
    if not 0.0 < r0 < E_INV:
        raise DomainError(f"tangency radius must lie in (0, 1/e), got {r0!r}")
    return -math.log(r0)


# ---------------------------------------------------------------------------
# cigars under the cusp


@dataclass(frozen=True)
class CigarTangency:
    r0: float
    eps: float
    delta: float

    @property
    def cigar(self):
        return Cigar(self.eps, self.delta)


def cigar_tangency(r0):
    """Cigar ``eps / (delta + r^2)`` tangent to ``h`` at ``r0``.

    Matching value and slope at ``r0`` gives ``delta = r0^2 / (L - 1)`` and
    ``eps = 1 / ((L - 1) L)`` with ``L = -log r0``; both are positive only for
    ``r0 < 1/e``.
    """
    L = _check_r0(r0)
    return CigarTangency(r0, 1.0 / ((L - 1.0) * L), r0 * r0 / (L - 1.0))


def cigar_cusp_ratio(r0, r):
    """``u_cigar(r) / h(r)`` for the cigar tangent at ``r0``; <= 1 with equality at r0."""
    L = _check_r0(r0)
    r = np.asarray(r, dtype=float)
    lr = np.log(r)
    # eps r^2 log^2 r / (delta + r^2), rewritten to avoid tiny deltas
    return r * r * lr * lr / (L * (r0 * r0 + (L - 1.0) * r * r))


def touch_gap(r0, r):
    """``F(r) = r^2 log^2 r - L (r0^2 + (L - 1) r^2)``, which is <= 0 on (0, 1)."""
    L = _check_r0(r0)
    r = np.asarray(r, dtype=float)
    return (r * np.log(r)) ** 2 - L * (r0 * r0 + (L - 1.0) * r * r)


def touch_gap_slope(r0, r):
    """``F'(r) = 2 r (-log r - log r0 - 1) (-log r + log r0)``."""
    L = _check_r0(r0)
    r = np.asarray(r, dtype=float)
    Lr = -np.log(r)
    return 2.0 * r * (Lr + L - 1.0) * (Lr - L)


def verify_cigar_touch(r0, n_samples=10_000, rtol=1e-10):
    """Maximum relative excess ``u_cigar / h - 1`` over log-uniform samples in (0, 1).

    Also checks that ``F'`` is positive below ``r0`` and negative above it, so
    that ``F`` has its maximum ``F(r0) = 0`` at the touching point.

    Raises
    ------
    TouchViolation
        If the cigar rises above the cusp by more than ``rtol`` relative, or
        the slope sign pattern fails.
    """
    _check_r0(r0)
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    r = np.exp(np.linspace(math.log(1e-12), math.log(1 - 1e-9), int(n_samples)))
    r = np.sort(np.append(r, r0))
    excess = cigar_cusp_ratio(r0, r) - 1.0
    i = int(np.argmax(excess))
    if excess[i] > rtol:
        raise TouchViolation(f"cigar exceeds cusp at r={r[i]:.6g} by {excess[i]:.3g}", r[i], excess[i])
    slope = touch_gap_slope(r0, r)
    below = r < r0 * (1 - 1e-9)
    above = r > r0 * (1 + 1e-9)
    if np.any(slope[below] <= 0) or np.any(slope[above] >= 0):
        raise TouchViolation("sign pattern of F' is not (+, -) around r0")
    return float(excess[i])


def envelope_sup(r, bounds=(1e-12, E_INV * (1 - 1e-12))):
    """Sup over r0 of the tangent-cigar family at fixed ``r``; returns (sup u / h, argmax r0)."""
    r = float(r)

    def neg(logr0):
        return -float(cigar_cusp_ratio(math.exp(logr0), r))

    res = optimize.minimize_scalar(
        neg, bounds=(math.log(bounds[0]), math.log(bounds[1])), method="bounded",
        options={"xatol": 1e-12},
    )
    return -float(res.fun), math.exp(res.x)


def capped_cusp_profile(r0):
    """C^1 profile: tangent cigar on ``r <= r0``, cusp ``h`` outside."""
    _check_r0(r0)
    return CappedCusp(r0)


def capped_cusp_r0_slope(r0, r):
    """``d(1/u_{r0})/d r0`` on the cap: ``(r0^2 - r^2)(-2 log r0 - 1) / r0``."""
    return (r0 * r0 - np.asarray(r) ** 2) * (-2.0 * math.log(r0) - 1.0) / r0


# ---------------------------------------------------------------------------
# exact cigar evolution and the origin lower bound


def cigar_flow(r0, r, t):
    """Log factor ``v`` of the exact flow ``eps / (delta e^{4t/eps} + r^2)``."""
    if t < 0:
        raise DomainError("time must be non-negative")
    tan = cigar_tangency(r0)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be non-negative")
    with np.errstate(divide="ignore"):
        lr2 = 2.0 * np.log(r)
    denom = np.logaddexp(math.log(tan.delta) + 4.0 * t / tan.eps, lr2)
    out = 0.5 * (math.log(tan.eps) - denom)
    return float(out) if out.ndim == 0 else out


def cigar_origin_log(r0, t):
    """``-log u(0, t)`` of the cigar flow: ``2 log r0 + log L + 4 t L (L - 1)``."""
    L = _check_r0(r0)
    return 2.0 * math.log(r0) + math.log(L) + 4.0 * t * L * (L - 1.0)


def cigar_origin_log_slope(r0, t):
    """``d/d r0`` of :func:`cigar_origin_log`."""
    L = _check_r0(r0)
    return (2.0 * L - 1.0) / r0 * (1.0 / L - 4.0 * t)


def origin_lower_bound(t):
    """Best cigar lower bound for ``v(0, t)`` and the optimal tangency radius.

    Maximising the cigar value at the origin over ``r0`` gives
    ``r0 = exp(-1 / (4 t))`` and ``u(0, t) >= 4 t exp(1 / (4 t) + 1)``.

    Returns
    -------
    (v_bound, r0_opt)
    """
    if not 0.0 < t < 0.25:
        raise DomainError("origin lower bound needs 0 < t < 1/4")
    v = 1.0 / (8.0 * t) + 0.5 * (1.0 + math.log(4.0 * t))
    return v, math.exp(-1.0 / (4.0 * t))


def origin_lower_bound_numeric(t):
    """Maximise ``cigar_flow(r0, 0, t)`` over ``r0`` numerically (independent check)."""
    if not 0.0 < t < 0.25:
        raise DomainError("origin lower bound needs 0 < t < 1/4")

    # L = -log r0 in (1, inf); the optimum sits at L = 1/(4t)
    def neg(L):
        return -cigar_flow(math.exp(-L), 0.0, t)

    res = optimize.minimize_scalar(neg, bounds=(1.0 + 1e-12, 10.0 / t), method="bounded",
                                   options={"xatol": 1e-12})
    return -float(res.fun), math.exp(-res.x)


# ---------------------------------------------------------------------------
# touching spheres under alpha^2 h


@dataclass(frozen=True)
class SphereTangency:
    alpha: float
    beta: float
    K0: float
    r0: float

    @property
    def sphere(self):
        return Sphere(self.beta, self.K0)


def sphere_beta(alpha, r0):
    """``beta(r0) = 2 alpha / (r0 (1 - log r0))``."""
    L = _check_r0(r0)
    return 2.0 * alpha / (r0 * (L + 1.0))


def sphere_K0(alpha, r0):
    """``K0(r0) = (L - 1)(L + 1) / alpha^2`` with ``L = -log r0``.

    Solving value and slope matching of ``beta / (1 + beta^2 K r^2 / 4)``
    against ``alpha / (r L)`` gives ``beta K0 r0 = 2 (L - 1) / alpha`` and
    ``beta r0 = 2 alpha / (L + 1)``, hence this form.  The variant
    ``(2 / alpha)(L^2 - 1)`` (see :func:`sphere_K0_two_over_alpha`) is not tangent
    for general ``alpha``.
    """
    L = _check_r0(r0)
    return (L - 1.0) * (L + 1.0) / alpha**2


def sphere_K0_two_over_alpha(alpha, r0):
    """``(2 / alpha)(L - 1)(L + 1)``; kept for comparison, not a tangent sphere."""
    L = _check_r0(r0)
    return 2.0 / alpha * (L - 1.0) * (L + 1.0)


def sphere_K0_lower(alpha, beta):
    """Lower bound ``(log(beta / (2 alpha))^2 - 1) / alpha^2`` for ``K0(beta)``.

    Follows from ``L >= log(beta / (2 alpha))``, true since
    ``log beta = log(2 alpha) + L - log(1 + L)``.
    """
    return (math.log(beta / (2.0 * alpha)) ** 2 - 1.0) / alpha**2


def sphere_K0_lower_two_over_alpha(alpha, beta):
    """``(2 / alpha)(log(beta / (2 alpha))^2 - 1)``; fails for large ``beta``."""
    return 2.0 / alpha * (math.log(beta / (2.0 * alpha)) ** 2 - 1.0)


def _log_beta_of_L(alpha, L):
    return math.log(2.0 * alpha) + L - math.log(L + 1.0)


def _tangent_L(alpha, log_beta, tol=1e-13):
    """Invert ``log beta = log(2 alpha) + L - log(1 + L)`` by bisection on ``L > 1``."""
    lo = 1.0
    hi = 2.0
    while _log_beta_of_L(alpha, hi) < log_beta:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise SearchFailure("could not bracket tangency radius")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if _log_beta_of_L(alpha, mid) < log_beta:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, mid) and hi - lo <= tol:
            break
    else:
        raise SearchFailure("bisection on the tangency radius did not converge")
    return 0.5 * (lo + hi)


def sphere_tangency(alpha, beta):
    """Sphere with origin factor ``beta^2`` tangent to ``alpha^2 h`` from below.

    The tangency radius is found by bisection in ``L = -log r0``, where the
    defining relation is monotone with slope ``L / (L + 1) >= 1/2``; this keeps
    the problem well conditioned even for ``beta`` just above ``alpha e``.
    """
    if not alpha >= 1.0:
        raise DomainError("sphere tangency needs alpha >= 1")
    if not beta > alpha * math.e:
        raise DomainError("no tangent sphere for beta <= alpha e")
    return _sphere_tangency_log(alpha, math.log(beta))


def _sphere_tangency_log(alpha, log_beta):
    L = _tangent_L(alpha, log_beta)
    K0 = (L - 1.0) * (L + 1.0) / alpha**2
    return SphereTangency(alpha, math.exp(log_beta), K0, math.exp(-L))


def sphere_cusp_ratio(alpha, beta, K, r):
    """``u_{beta,K}(r) / (alpha^2 h(r))``."""
    r = np.asarray(r, dtype=float)
    lr = np.log(r)
    # log form: beta^2 K r^2 overflows for tall spheres
    log_x = 2.0 * math.log(beta) + math.log(K / 4.0) + 2.0 * lr
    log_ratio = math.log(beta / alpha) + lr + np.log(np.abs(lr)) - np.logaddexp(0.0, log_x)
    return np.exp(2.0 * log_ratio)


def barrier_v(alpha, tan, r):
    """Log factor of ``w_beta``: the tangent sphere inside ``r0``, ``alpha^2 h`` outside."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    inner = r < tan.r0
    if np.any(inner):
        out[inner] = eval_v(tan.sphere, r[inner])
    if np.any(~inner):
        out[~inner] = eval_v(Cusp(alpha), r[~inner])
    return out


@dataclass(frozen=True)
class Witness:
    """Result of :func:`curvature_witness`."""

    K0: float
    beta: float
    r0: float
    r_touch: float
    gap: float


def curvature_witness(u_field, t, alpha=DEFAULT_ALPHA, mu=DEFAULT_MU, touch_rtol=1e-6):
    """Certified curvature lower bound from the lowest touching sphere barrier.

    Lowers ``beta`` until the barrier ``w_beta`` (sphere inside ``r0(beta)``,
    ``alpha^2 h`` outside) first touches the sampled field from above.  At the
    touching node the field curves at least as much as the sphere, so the
    returned ``K0(beta)`` bounds the field's maximum curvature from below.

    Parameters
    ----------
    u_field : Sampled
    t : float
        Time stamp of the field, used for the ``v(0) >= mu / t`` precondition.

    Raises
    ------
    PreconditionError
        If the field reaches ``alpha^2 h`` somewhere, or ``v(0) < mu / t``.
    SearchFailure
        If the first contact is at the outer node, outside the sphere part,
        or no admissible ``beta > alpha e`` exists.
    """
    if not isinstance(u_field, Sampled):
        raise TypeError("curvature_witness needs a Sampled field")
    r = u_field.grid.nodes
    v = u_field.v_values
    pos = r > 0
    ceiling = eval_v(Cusp(alpha), r[pos])
    if np.any(v[pos] >= ceiling):
        i = int(np.argmax(v[pos] - ceiling))
        raise PreconditionError(f"field reaches alpha^2 h at r={r[pos][i]:.6g}")
    if t > 0 and v[0] < mu / t:
        raise PreconditionError(f"v(0)={v[0]:.6g} below mu/t={mu / t:.6g}")

    def gap(log_beta):
        tan = _sphere_tangency_log(alpha, log_beta)
        w = barrier_v(alpha, tan, r)
        # relative gap (w_beta - u) / u in log form
        g = np.expm1(2.0 * (w - v))
        return tan, g

    lo = math.log(alpha) + 1.0 + 1e-12
    tan_lo, g_lo = gap(lo)
    if np.min(g_lo) >= 0:
        raise SearchFailure("field lies below every admissible barrier (no touching beta > alpha e)")
    hi = max(float(v[0]) + 1.0, lo + 1.0)
    tan_hi, g_hi = gap(hi)
    while np.min(g_hi) < 0:
        hi += 2.0
        tan_hi, g_hi = gap(hi)
        if hi > 1e4:
            raise SearchFailure("could not place a barrier above the field")
    # bisection in log beta: g_lo has a negative node, g_hi is non-negative
    for _ in range(200):
        if np.min(g_hi) <= touch_rtol:
            break
        mid = 0.5 * (lo + hi)
        tan_mid, g_mid = gap(mid)
        if np.min(g_mid) < 0:
            lo = mid
        else:
            hi, tan_hi, g_hi = mid, tan_mid, g_mid
        if hi - lo < 1e-15:
            break
    i = int(np.argmin(g_hi))
    if i == r.size - 1:
        raise SearchFailure("barrier first touches at the outer boundary node")
    if not r[i] < tan_hi.r0:
        raise SearchFailure(f"contact at r={r[i]:.6g} is not inside the sphere part (r0={tan_hi.r0:.6g})")
    return Witness(tan_hi.K0, tan_hi.beta, tan_hi.r0, float(r[i]), float(g_hi[i]))
