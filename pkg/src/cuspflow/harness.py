"""Experiment runner: closed-form lemma battery, solver validation and the
contracting-cusp asymptotics, with machine-readable reports.

Configuration is a flat ``key = value`` text file (``#`` starts a comment,
lists are comma separated, every key optional).  Radii may be written as
plain floats or as ``exp(x)``.  Recognised keys are the fields of
:class:`ExperimentConfig`; dashes and underscores are interchangeable.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import barriers, harnack
from .metrics import (
    CappedCusp,
    Cusp,
    Poincare,
    RadialGrid,
    Sampled,
    Sphere,
    eval_v,
    resolved_curvature,
)
from .solver import ExactCigar, ScaledCusp, ShrinkingSphere, SolverConfig, convergence_study, run

SCHEMA = 1
EXPERIMENTS = ("lemmas", "validate", "contract")

#: columns of ``series.csv``, in order
CSV_COLUMNS = (
    "r0",  # initial cap radius of the run
    "t",
    "v0",  # v(0, t)
    "t_v0",
    "v0_bound",  # 1/(8t) + (1 + log 4t)/2, NaN for t >= 1/4
    "max_K",  # largest nodal curvature (outer node excluded)
    "r_max_K",
    "t2_max_K",
    "witness_K0",  # NaN where the sandwich precondition 1 + 2t < alpha^2 fails
    "t2_witness",
    "liyau_sup",  # sup over r <= 1/4 of (t - t1) K / v, NaN at window starts
    "annulus_err",  # sup over r in [0.5, 0.8] of |K + 1/(1 + 2t)|
    "t_max_v_half",  # t * max_{r <= 1/2} v
    "grad_sup",  # sup over r <= 1/2 of |grad log v|_u^2
    "smoothing",  # sup over r <= 1/2 of log u - 2/t
    "sandwich_lower",  # min of v - v[(1 + 2t) Poincare], interior nodes
    "sandwich_upper",  # min of v[(1 + 2t) cusp] - v, interior nodes
)


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


class InsufficientSamples(ValueError):
    pass


class NonPositiveValue(ValueError):
    pass


def _geom_default():
    ts = set(float(x) for x in np.geomspace(0.03, 0.2, 12))
    ts.add(0.1)
    return tuple(sorted(ts))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "contract"
    r0: tuple = (math.exp(-30.0),)
    grid: int = 4096
    r_out: float = 0.9
    t_samples: tuple = field(default_factory=_geom_default)
    fit_window: tuple = (0.03, 0.2)
    alpha: float = barriers.DEFAULT_ALPHA
    mu: float = barriers.DEFAULT_MU
    c1: float = barriers.DEFAULT_C1
    seed: int = 0
    out: str = "cuspflow-out"
    format: str = "both"
    # contract extras
    window_points: int = 4  # samples inside each Li-Yau window [t1, 17 t1 / 16]
    compare_t: float = 0.1
    r_out_sweep: tuple = ()
    refine_grid: int = 0
    v0_slack: float = 0.05
    agree_tol: float = 1e-3
    annulus_tol: float = 0.05
    sandwich_slack: float = 5e-4
    # validate
    validate_grids: tuple = (512, 1024, 2048)
    validate_n: int = 4096
    validate_t: float = 0.1
    validate_tol: float = 1e-4

    def check(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not self.c1 > 32:
            raise ConfigError("c1 must exceed 32")
        q = 2.0 * self.mu**2 / self.alpha
        if not (1.0 / 32.0 > q > 1.0 / self.c1):
            raise ConfigError(f"need 1/32 > 2 mu^2 / alpha > 1/c1, got 2 mu^2 / alpha = {q:.6g}")
        if not self.alpha > 1:
            raise ConfigError("alpha must exceed 1")
        if not self.r0 or any(not 0 < r < math.exp(-1) for r in self.r0):
            raise ConfigError("every r0 must lie in (0, 1/e)")
        if self.grid < 17 or (self.refine_grid and self.refine_grid < 17):
            raise ConfigError("grid sizes must be at least 17")
        if not 0 < self.r_out < 1 or any(not 0 < r < 1 for r in self.r_out_sweep):
            raise ConfigError("outer radii must lie in (0, 1)")
        ts = self.t_samples
        if not ts or any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts[:-1], ts[1:])):
            raise ConfigError("t_samples must be positive and strictly increasing")
        lo, hi = self.fit_window
        if not 0 < lo < hi:
            raise ConfigError("fit_window must satisfy 0 < lo < hi")
        if self.format not in ("csv", "json", "both"):
            raise ConfigError("format must be csv, json or both")
        if self.window_points < 0:
            raise ConfigError("window_points must be >= 0")
        if len(set(self.validate_grids)) < 3:
            raise ConfigError("validate_grids needs three distinct sizes")
        return self


_RADIUS = re.compile(r"^exp\((?P<x>[^)]+)\)$")


def _parse_float(tok):
    tok = tok.strip()
    m = _RADIUS.match(tok.replace(" ", ""))
    try:
        if m:
            return math.exp(float(m.group("x")))
        return float(tok)
    except ValueError:
        raise ConfigError(f"cannot parse number {tok!r}") from None


def _coerce(name, raw):
    proto = getattr(ExperimentConfig(), name)
    if isinstance(proto, tuple):
        items = [s for s in raw.split(",") if s.strip()]
        if name == "validate_grids":
            return tuple(int(_parse_float(s)) for s in items)
        vals = tuple(_parse_float(s) for s in items)
        if name == "t_samples":
            vals = tuple(sorted(set(vals)))
        return vals
    if isinstance(proto, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(proto, int):
        v = _parse_float(raw)
        if v != int(v):
            raise ConfigError(f"{name} must be an integer")
        return int(v)
    if isinstance(proto, float):
        return _parse_float(raw)
    return raw.strip()


def parse_config(text, **overrides):
    """Build an :class:`ExperimentConfig` from ``key = value`` text.

    ``overrides`` are applied after the file (``None`` values are ignored),
    then the result is validated.
    """
    names = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in names:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.check()


def load_config(path, **overrides):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, **overrides)


# ---------------------------------------------------------------------------
# report types


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: str
    detail: str = ""


@dataclass
class RunReport:
    experiment: str
    config: dict
    rows: list = field(default_factory=list)
    fit: dict = None
    checks: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self):
        for c in self.checks:
            if not c.passed:
                return c.name
        return None

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "experiment": self.experiment,
            "passed": self.passed,
            "first_failure": self.first_failure,
            "config": self.config,
            "fit": self.fit,
            "checks": [asdict(c) for c in self.checks],
            "rows": [{k: row[k] for k in CSV_COLUMNS} for row in self.rows],
            "stats": self.stats,
        }


def _config_echo(cfg):
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


# ---------------------------------------------------------------------------
# rate fit


def rate_fit(samples, window):
    """Least-squares power law ``value ~ c t^-p`` on samples inside ``window``.

    Parameters
    ----------
    samples : iterable of (t, value)
    window : (t_lo, t_hi), inclusive

    Returns
    -------
    (p, c, r2)
    """
    lo, hi = window
    pts = [(float(t), float(y)) for t, y in samples if lo <= t <= hi]
    if len(pts) < 5:
        raise InsufficientSamples(f"need >= 5 samples in [{lo}, {hi}], got {len(pts)}")
    if any(not y > 0 for _, y in pts):
        raise NonPositiveValue("rate fit needs strictly positive values")
    x = np.log([t for t, _ in pts])
    y = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), float(math.exp(intercept)), r2


# ---------------------------------------------------------------------------
# lemma battery


def _lemmas(cfg):
    rng = np.random.default_rng(cfg.seed)
    alpha = cfg.alpha
    checks = []

    def add(name, ok, value, limit, detail=""):
        checks.append(Check(name, bool(ok), float(value), limit, detail))

    # cigar touching the cusp from below
    try:
        ex = barriers.verify_cigar_touch(math.exp(-2.0), 10_000)
        add("cigar_touch", True, ex, "<= 1e-10 relative")
    except barriers.TouchViolation as exc:
        add("cigar_touch", False, math.nan, "<= 1e-10 relative", str(exc))

    r0s = np.exp(-rng.uniform(1.0 + 1e-8, -math.log(1e-8), 50))
    res = 0.0
    for r0 in r0s:
        tan = barriers.cigar_tangency(r0)
        h = eval_v(Cusp(), r0)
        res = max(res, abs(math.expm1(2 * (eval_v(tan.cigar, r0) - h))))
        dh = Cusp().dv(r0)
        res = max(res, abs(tan.cigar.dv(r0) - dh) / abs(dh))
    add("cigar_tangency_residual", res <= 1e-10, res, "<= 1e-10 relative")

    # pointwise monotonicity of the capped cusps in r0
    worst = math.inf
    for _ in range(50):
        a, b = sorted(np.exp(-rng.uniform(1.0 + 1e-6, 40.0, 2)))
        r = rng.uniform(0.0, 1.0 - 1e-6)
        worst = min(worst, eval_v(CappedCusp(a), r) - eval_v(CappedCusp(b), r))
    add("capped_cusp_monotone", worst >= -1e-14, worst, "v(r0 small) - v(r0 large) >= 0")

    # cusp as envelope of the cigars
    err = 0.0
    arg = 0.0
    for r in np.exp(-rng.uniform(1.0 + 1e-3, 20.0, 20)):
        ratio, r_star = barriers.envelope_sup(r)
        err = max(err, abs(ratio - 1.0))
        arg = max(arg, abs(math.log(r_star / r)))
    add("envelope_identity", err <= 1e-8, err, "<= 1e-8 relative", f"max |log(argmax / r)| = {arg:.3g}")

    # static gradient bound
    sups = [harnack.gradient_bound_static(math.exp(-k)) for k in (5.0, 10.0, 20.0, 40.0)]
    cusp_sup = harnack.cusp_gradient_sup()
    add("static_bound_uniform", max(sups) <= 2 * cusp_sup, max(sups), f"<= 2 x {cusp_sup:.6g}")
    drift = (max(sups) - min(sups)) / max(sups)
    add("static_bound_drift", drift <= 0.05, drift, "<= 0.05")
    lim = float(harnack.cusp_gradient_quantity(1e-8))
    add("cusp_part_limit_at_1e-8", abs(lim - 1.0) <= 1e-4, abs(lim - 1.0), "<= 1e-4",
        "the cusp-part quantity tends to 1 only like 1 + 2 log L / L with L = -log r")
    lim_far = float(harnack.cusp_gradient_quantity_log(1e8))
    add("cusp_part_limit_L_1e8", abs(lim_far - 1.0) <= 1e-6, abs(lim_far - 1.0), "<= 1e-6")

    # touching spheres
    res = 0.0
    for r0 in r0s:
        beta = barriers.sphere_beta(alpha, r0)
        tan = barriers.sphere_tangency(alpha, beta)
        cusp = Cusp(alpha)
        res = max(res, abs(tan.r0 / r0 - 1.0))
        res = max(res, abs(math.expm1(2 * (eval_v(tan.sphere, r0) - eval_v(cusp, r0)))))
        res = max(res, abs(tan.sphere.dv(r0) / cusp.dv(r0) - 1.0))
    add("sphere_tangency_residual", res <= 1e-10, res, "<= 1e-10 relative")

    lb = np.sort(math.log(alpha * math.e) + np.exp(rng.uniform(-8.0, math.log(40.0), 100)))
    tans = [barriers._sphere_tangency_log(alpha, x) for x in lb]
    K0 = np.array([t.K0 for t in tans])
    R0 = np.array([t.r0 for t in tans])
    mono = bool(np.all(np.diff(K0) > 0) and np.all(np.diff(R0) < 0))
    add("sphere_family_monotone", mono, float(np.min(np.diff(K0))), "K0 increasing, r0 decreasing")

    near = barriers.sphere_tangency(alpha, alpha * math.e * (1 + 1e-6))
    asym = max(near.K0, abs(near.r0 * math.e - 1.0))
    add("sphere_asymptotics", asym <= 1e-5, asym, "K0, |e r0 - 1| <= 1e-5 at beta = alpha e (1 + 1e-6)")

    gap_true = min(t.K0 - barriers.sphere_K0_lower(alpha, t.beta) for t in tans)
    add("sphere_K0_lower_bound", gap_true >= 0, gap_true, "K0 - (log(beta/2a)^2 - 1)/a^2 >= 0")
    gap_2a = min(t.K0 - barriers.sphere_K0_lower_two_over_alpha(alpha, t.beta) for t in tans)
    add("sphere_K0_lower_bound_2_over_alpha", gap_2a >= 0, gap_2a,
        "K0 - (2/a)(log(beta/2a)^2 - 1) >= 0",
        "the (2/a) form exceeds the tangent-sphere curvature once -log r0 is larger than about 7")

    # origin lower bound: closed form against direct maximisation
    err = 0.0
    for t in (0.02, 0.05, 0.1, 0.2):
        v_c, r_c = barriers.origin_lower_bound(t)
        v_n, r_n = barriers.origin_lower_bound_numeric(t)
        err = max(err, abs(v_n / v_c - 1.0), abs(r_n / r_c - 1.0))
    add("origin_bound_closed_vs_numeric", err <= 1e-6, err, "<= 1e-6 relative")
    return RunReport("lemmas", _config_echo(cfg), checks=checks)


# ---------------------------------------------------------------------------
# solver validation


def _validate(cfg):
    checks = []
    stats = {}
    solver_cfg = SolverConfig(dt_max=1e-5)
    t = cfg.validate_t

    r0 = math.exp(-2.0)
    tan = barriers.cigar_tangency(r0)
    scale_c = math.sqrt(tan.delta)

    def cigar_exact(r, tt):
        return barriers.cigar_flow(r0, r, tt)

    sph = Sphere(1.0, 1.0)
    sph_bc = ShrinkingSphere(sph.beta, sph.K)

    def sphere_exact(r, tt):
        return eval_v(sph, r) + 0.5 * math.log1p(-2.0 * sph.K * tt)

    cases = (
        ("cigar", tan.cigar, ExactCigar(r0), cigar_exact, lambda n: RadialGrid.sinh(n, cfg.r_out, scale_c)),
        ("sphere", sph, sph_bc, sphere_exact, lambda n: RadialGrid.sinh(n, cfg.r_out, 0.5)),
    )
    for name, prof, bc, exact, factory in cases:
        g = factory(cfg.validate_n)
        tr = run(prof, g, bc, solver_cfg, sample_times=[t])
        err = float(np.max(np.abs(tr[-1].v[:-1] - exact(g.nodes[:-1], t))))
        checks.append(Check(f"{name}_error_N{cfg.validate_n}", err <= cfg.validate_tol, err,
                            f"<= {cfg.validate_tol:g}"))
        stats[name] = tr.stats.as_dict()
        order, sizes, errs = convergence_study(prof, bc, 0.02, cfg.validate_grids, exact, factory, dt_coeff=5.0)
        checks.append(Check(f"{name}_order", 1.7 <= order <= 2.3, order, "in [1.7, 2.3]",
                            "errors " + ", ".join(f"{n}:{e:.3e}" for n, e in zip(sizes, errs))))
    return RunReport("validate", _config_echo(cfg), checks=checks, stats=stats)


# ---------------------------------------------------------------------------
# contracting cusp


def _sample_plan(cfg):
    """Sample times and the window start each one belongs to (``None`` for starts)."""
    owner = {}
    for t1 in cfg.t_samples:
        owner.setdefault(float(t1), None)
        for k in range(1, cfg.window_points + 1):
            t = round(t1 * (1.0 + k / (16.0 * cfg.window_points)), 15)
            owner.setdefault(t, float(t1))
    owner.setdefault(float(cfg.compare_t), None)
    times = sorted(owner)
    return times, owner


def _contract_job(job):
    r0, n, r_out, times = job
    g = RadialGrid.sinh(n, r_out, r0 / 4.0)
    tr = run(CappedCusp(r0), g, ScaledCusp(), SolverConfig(), sample_times=times)
    return tr


def _row(state, r0, t1, cfg):
    r = state.grid.nodes
    v = np.asarray(state.v)
    t = state.t
    K = resolved_curvature(r, v)
    j = int(np.argmax(K[:-1]))
    half = r <= 0.5
    row = dict.fromkeys(CSV_COLUMNS, math.nan)
    row.update(r0=r0, t=t, v0=float(v[0]), t_v0=t * float(v[0]))
    if t < 0.25:
        row["v0_bound"] = barriers.origin_lower_bound(t)[0]
    row.update(max_K=float(K[j]), r_max_K=float(r[j]), t2_max_K=t * t * float(K[j]))
    if t < (cfg.alpha**2 - 1.0) / 2.0:
        try:
            w = barriers.curvature_witness(Sampled(state.grid, v), t, cfg.alpha, cfg.mu)
            row.update(witness_K0=w.K0, t2_witness=t * t * w.K0)
        except (barriers.PreconditionError, barriers.SearchFailure):
            pass
    if t1 is not None:
        row["liyau_sup"] = harnack.rebased_ratio(state, t1, 0.25)[0]
    ann = (r >= 0.5) & (r <= 0.8)
    if np.any(ann):
        row["annulus_err"] = float(np.max(np.abs(K[ann] + 1.0 / (1.0 + 2.0 * t))))
    row["t_max_v_half"] = t * float(np.max(v[half]))
    row["grad_sup"] = float(np.nanmax(harnack.gradient_field(state, 0.5)[0]))
    row["smoothing"] = float(np.max(2.0 * v[half] - 2.0 / t))
    inner = slice(1, -1)
    lift = 0.5 * math.log1p(2.0 * t)
    row["sandwich_lower"] = float(np.min(v[inner] - lift - eval_v(Poincare(), r[inner])))
    row["sandwich_upper"] = float(np.min(lift + eval_v(Cusp(), r[inner]) - v[inner]))
    return row


def _threads():
    raw = os.environ.get("CUSPFLOW_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CUSPFLOW_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("CUSPFLOW_THREADS must be >= 1")
    return n


def _run_jobs(jobs):
    workers = min(_threads(), len(jobs))
    if workers <= 1:
        return [_contract_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_contract_job, jobs))


def _at(traj, t):
    for s in traj:
        if s.t == t:
            return s
    raise KeyError(t)


def _max_diff(a, b, radius):
    ra, rb = a.grid.nodes, b.grid.nodes
    m = ra <= radius
    return float(np.max(np.abs(a.v[m] - np.interp(ra[m], rb, b.v))))


def _contract(cfg):
    times, owner = _sample_plan(cfg)
    r0s = sorted(set(cfg.r0), reverse=True)
    r_main = r0s[-1]  # smallest cap, i.e. largest n
    jobs = [(r0, cfg.grid, cfg.r_out, times) for r0 in r0s]
    jobs += [(r_main, cfg.grid, R, times) for R in cfg.r_out_sweep]
    if cfg.refine_grid:
        jobs.append((r_main, cfg.refine_grid, cfg.r_out, times))
    trajs = _run_jobs(jobs)
    main = dict(zip(r0s, trajs[: len(r0s)]))
    sweep = trajs[len(r0s): len(r0s) + len(cfg.r_out_sweep)]
    refined = trajs[-1] if cfg.refine_grid else None

    rows = []
    for r0 in r0s:
        for st in main[r0]:
            rows.append(_row(st, r0, owner.get(st.t), cfg))
    rows.sort(key=lambda row: (row["t"], -row["r0"]))
    stats = {f"r0={r0!r}": main[r0].stats.as_dict() for r0 in r0s}

    lo, hi = cfg.fit_window
    win = [row for row in rows if row["r0"] == r_main and lo <= row["t"] <= hi]
    checks = []

    def add(name, ok, value, limit, detail=""):
        checks.append(Check(name, bool(ok), float(value), limit, detail))

    ratio = min(row["v0"] / row["v0_bound"] for row in win)
    add("origin_lower_bound", ratio >= 1.0 - cfg.v0_slack, ratio, f"v0 / bound >= {1 - cfg.v0_slack:g}")

    def c_const(traj):
        cs = []
        for st in traj:
            if lo <= st.t <= hi:
                half = st.grid.nodes <= 0.5
                cs.append((st.t * float(np.max(st.v[half])) - 1.0) / st.t)
        return max(cs)

    C = c_const(main[r_main])
    if refined is not None:
        C2 = c_const(refined)
        rel = abs(C2 - C) / abs(C)
        add("t_max_v_constant_refined", rel <= 0.2, rel, "|C(2N) - C(N)| / |C| <= 0.2",
            f"C = {C!r} at N = {cfg.grid}, {C2!r} at N = {cfg.refine_grid}")
    else:
        add("t_max_v_constant", math.isfinite(C), C, "finite", "t max v <= 1 + C t on the window")

    try:
        p, c, r2 = rate_fit([(row["t"], row["max_K"]) for row in win], cfg.fit_window)
    except (InsufficientSamples, NonPositiveValue) as exc:
        raise ConfigError(f"rate fit impossible: {exc}") from None
    fit = {"p": p, "c": c, "r2": r2, "window": list(cfg.fit_window), "n": len(win)}
    add("rate_exponent", 1.7 <= p <= 2.3, p, "in [1.7, 2.3]")
    add("rate_fit_r2", r2 >= 0.98, r2, ">= 0.98")

    wit = [row for row in win if math.isfinite(row["witness_K0"])]
    floor = min((row["t2_witness"] for row in wit), default=math.nan)
    add("witness_floor", bool(wit) and floor >= 1.0 / cfg.c1, floor, f"t^2 K0 >= 1/{cfg.c1:g}",
        f"{len(wit)} rows with t < (alpha^2 - 1)/2")
    sound = max((row["witness_K0"] / row["max_K"] for row in wit), default=math.nan)
    add("witness_sound", bool(wit) and sound <= 1.0 + 1e-6, sound, "K0 / max K <= 1")

    ann = max(row["annulus_err"] for row in win)
    add("annulus_curvature", ann <= cfg.annulus_tol, ann, f"<= {cfg.annulus_tol:g}")

    sw = min(min(row["sandwich_lower"], row["sandwich_upper"]) for row in rows if row["r0"] == r_main)
    add("sandwich", sw >= -cfg.sandwich_slack, sw, f">= -{cfg.sandwich_slack:g} in v")

    try:
        ly = harnack.liyau_conclusion_check(main[r_main], 0.25)
        add("liyau_windows", ly.max_v_ratio <= 1.0, ly.max_v_ratio, "t1 max v / 2 <= 1 on every window",
            f"sup (t - t1) K / v = {ly.sup!r} over {len(ly.windows)} windows")
    except harnack.WindowInfeasible as exc:
        add("liyau_windows", False, math.nan, "some valid window", str(exc))

    static = harnack.gradient_bound_static(r_main)
    gsup = max(row["grad_sup"] for row in rows if row["r0"] == r_main)
    add("gradient_bound", gsup <= 1.2 * static, gsup / static, "<= 1.2 x static bound")

    tc = cfg.compare_t
    if len(r0s) > 1:
        d = max(_max_diff(_at(main[r_main], tc), _at(main[r0], tc), 0.5) for r0 in r0s[:-1])
        origin = ", ".join(f"{-math.log(r0):.4g}: {_at(main[r0], tc).v[0]:.6g}" for r0 in r0s)
        add("r0_independence", d <= cfg.agree_tol, d, f"<= {cfg.agree_tol:g} on r <= 0.5 at t = {tc:g}",
            f"v(0, t) by -log r0 = {origin}")
    if sweep:
        base = _at(main[r_main], tc)
        d = max(_max_diff(base, _at(tr, tc), 0.25) for tr in sweep)
        add("r_out_sensitivity", d <= cfg.agree_tol, d, f"<= {cfg.agree_tol:g} on r <= 0.25 at t = {tc:g}")
    return RunReport("contract", _config_echo(cfg), rows=rows, fit=fit, checks=checks, stats=stats)


def run_experiment(cfg):
    """Run the suite named by ``cfg.experiment`` and return its :class:`RunReport`."""
    cfg.check()
    suite = {"lemmas": _lemmas, "validate": _validate, "contract": _contract}[cfg.experiment]
    return suite(cfg)


# ---------------------------------------------------------------------------
# output


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    return x


def report_json(report):
    """Deterministic JSON text; floats use the shortest round-trip form, NaN as null."""
    return json.dumps(_clean(report.to_dict()), indent=2, allow_nan=False) + "\n"


def report_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report.rows:
        w.writerow([repr(float(row[k])) for k in CSV_COLUMNS])
    return buf.getvalue()


def emit_report(report, fmt="both", out_dir="."):
    """Write ``report.json`` and/or ``series.csv`` into ``out_dir``; returns the paths."""
    if fmt not in ("csv", "json", "both"):
        raise ValueError("format must be csv, json or both")
    out = Path(out_dir)
    paths = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt in ("json", "both"):
            p = out / "report.json"
            p.write_bytes(report_json(report).encode("utf-8"))
            paths.append(p)
        if fmt in ("csv", "both"):
            p = out / "series.csv"
            p.write_bytes(report_csv(report).encode("utf-8"))
            paths.append(p)
    except OSError as exc:
        raise OSError(f"cannot write report under {out}: {exc}") from exc
    return paths


__all__ = [
    "CSV_COLUMNS",
    "Check",
    "ConfigError",
    "ExperimentConfig",
    "InsufficientSamples",
    "NonPositiveValue",
    "RunReport",
    "emit_report",
    "load_config",
    "parse_config",
    "rate_fit",
    "report_csv",
    "report_json",
    "run_experiment",
]
