"""Empirical verification of the limit statements: error sequences on
log-spaced time grids, log-log slope fits against predicted exponents, and
the four auxiliary-lemma checkers.

Conventions:

* theorem 1 (gamma > 0): e(t) = |P(t;s)/U(s) - 1|, predicted envelope
  Delta(t;s) * K(tau(t)) with Delta ~ (1/gamma) lambda(t;s)^(-gamma/nu),
  so the time exponent is -gamma/nu.
* theorem 2 (gamma < 0, mu > 0, C = |gamma|): rho(t;s) =
  |exp(T(t)) P(t;s)/pi(s) - 1|, envelope ell(tau)/tau^mu, exponent -mu/nu.
  When both tail functions are exactly constant the envelope integrand
  vanishes identically and the error is dominated by the T-compensation
  term instead, which decays at the faster exponent -delta/nu; the fit
  therefore predicts -delta/nu for exactly-constant specs and -mu/nu
  otherwise.
* corollary (gamma < 0): same for exp(T(t)) p_00(t) against pi(0).

Everything that can overflow (exp(T) with T -> infinity) is handled by
summing exponents in log space before a single expm1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ModelError, PreconditionError
from .invariants import compute_B, log_pi
from .kernel import compute_P, gf_integral_to_one, solve_F
from .laws import ModelSpec
from .quadrature import doubling_quadrature
from .rvcalc import SlowlyVaryingSpec


@dataclass
class RateFit:
    """Least-squares fit of log(error) against log(t) on the tail window."""

    t_grid: np.ndarray
    errors: np.ndarray
    fitted_slope: float
    fitted_intercept: float
    r_squared: float
    predicted_slope: float
    slope_tol: float
    rsq_min: float
    window: np.ndarray                      # boolean mask of fitted points
    envelope: Optional[np.ndarray] = None   # predicted envelope values
    envelope_ratio: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)
    label: str = ""

    @property
    def margin(self) -> float:
        return abs(self.fitted_slope - self.predicted_slope)

    @property
    def verdict(self) -> bool:
        return self.margin <= self.slope_tol and self.r_squared >= self.rsq_min

    def summary(self) -> str:
        status = "PASS" if self.verdict else "FAIL"
        return (f"{self.label} slope {self.fitted_slope:.3f} "
                f"(predicted {self.predicted_slope:.3f}) {status}")


def fit_loglog(t, err, predicted_slope, slope_tol=0.1, rsq_min=0.99,
               window_decades=2.0, floor=0.0, label="") -> RateFit:
    """Fit ln(err) = a*ln(t) + b over the top ``window_decades`` of the grid,
    excluding points at or below the numeric ``floor`` (tolerance
    contamination guard)."""
    t = np.asarray(t, dtype=float)
    err = np.asarray(err, dtype=float)
    window = (t >= t.max() / 10.0 ** window_decades) & (err > floor)
    if np.count_nonzero(window) < 3:
        raise ModelError("fewer than 3 usable points in the fit window")
    x = np.log(t[window])
    y = np.log(err[window])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(t_grid=t, errors=err, fitted_slope=float(slope),
                   fitted_intercept=float(intercept), r_squared=r2,
                   predicted_slope=predicted_slope, slope_tol=slope_tol,
                   rsq_min=rsq_min, window=window, label=label)


def _logP_grid(model, s, t_grid, rtol, method, f_rtol=1e-12, f_atol=1e-300):
    """log P(t; s) and R(t; s) along a time grid.

    The flow is solved tighter than the quadrature (f_rtol, with pure
    relative error control since R stays strictly positive): the transient
    checks compare T(t) against R**(-|gamma|), a difference of two large
    numbers whose cancellation amplifies any error in R.
    """
    logp = np.empty(len(t_grid))
    Rs = np.empty(len(t_grid))
    for k, t in enumerate(t_grid):
        gv = compute_P(model, float(t), s, rtol=rtol, method=method,
                       f_rtol=f_rtol, f_atol=f_atol)
        logp[k] = float(np.real(gv.logP))
        Rs[k] = float(np.real(gv.R))
    return logp, Rs


def rate_theorem1(model: ModelSpec, s: float, t_grid, rtol: float = 1e-10,
                  slope_tol: float = 0.1, rsq_min: float = 0.99,
                  method: str = "quad", window_decades: float = 2.0,
                  floor: float = 1e-8) -> RateFit:
    """Convergence rate of P(t; s) to U(s) in the positive-recurrent regime.

    e(t) = |P(t;s)/U(s) - 1| = |expm1(-integral_{F(t;s)}^1 g/f du)|; the
    difference of exponents is computed directly (one tail integral), never
    as a quotient of two nearly equal numbers.
    """
    if not model.gamma > 0:
        raise PreconditionError("theorem-1 rates need gamma > 0")
    if not 0.0 <= s <= 0.95:
        raise ModelError("theorem-1 rate check expects s in [0, 0.95]")
    t_grid = np.asarray(t_grid, dtype=float)
    ctx = model.context()
    errors = np.empty(len(t_grid))
    envelope = np.empty(len(t_grid))
    fmethod = "ode" if method == "quad" else "auto"
    for k, t in enumerate(t_grid):
        gv = solve_F(model, float(t), s, rtol=min(rtol, 1e-12), atol=1e-300,
                     method=fmethod)
        tail, _ = gf_integral_to_one(model, rtol=rtol, one_minus_s=gv.R)
        errors[k] = abs(np.expm1(-np.real(tail)))
        lam = ctx.lam_shift(float(t), s)
        envelope[k] = (1.0 / model.gamma) / lam ** (model.gamma / model.nu) \
            * ctx.K(ctx.tau(float(t)))
    fit = fit_loglog(t_grid, errors, predicted_slope=-model.gamma / model.nu,
                     slope_tol=slope_tol, rsq_min=rsq_min,
                     window_decades=window_decades, floor=floor,
                     label="theorem1")
    fit.envelope = envelope
    fit.envelope_ratio = errors / envelope
    fit.extras["compensated"] = errors * t_grid ** (model.gamma / model.nu)
    return fit


def _transient_log_ratio(model: ModelSpec, s: float, t_grid, rtol, method):
    """log( exp(T(t)) P(t;s) / pi(s) ) along the grid, all in log space."""
    model.require_transient_limit()
    ctx = model.context()
    lpi = float(np.real(log_pi(model, s, rtol=rtol)))
    logp, _ = _logP_grid(model, s, t_grid, rtol, method)
    T = np.array([ctx.big_T(float(t)) for t in t_grid])
    return T + logp - lpi


def transient_predicted_slope(model: ModelSpec) -> float:
    """-mu/nu when the tail functions carry a genuine remainder; -delta/nu
    for exactly constant tail functions (the envelope integrand vanishes
    identically and the compensation term dominates)."""
    ctx = model.context()
    if ctx.L.kind == "constant" and ctx.ell.kind == "constant":
        return -model.delta / model.nu
    return -model.mu / model.nu


def rate_theorem2(model: ModelSpec, s: float, t_grid, rtol: float = 1e-10,
                  slope_tol: float = 0.1, rsq_min: float = 0.99,
                  method: str = "quad", window_decades: float = 2.0,
                  floor: float = 1e-8) -> RateFit:
    """Convergence rate of exp(T(t)) P(t; s) to pi(s) in the transient regime."""
    t_grid = np.asarray(t_grid, dtype=float)
    log_ratio = _transient_log_ratio(model, s, t_grid, rtol, method)
    errors = np.abs(np.expm1(log_ratio))
    ctx = model.context()
    tau = np.array([ctx.tau(float(t)) for t in t_grid])
    envelope = ctx.ell(tau) / tau ** model.mu
    fit = fit_loglog(t_grid, errors, predicted_slope=transient_predicted_slope(model),
                     slope_tol=slope_tol, rsq_min=rsq_min,
                     window_decades=window_decades, floor=floor,
                     label="theorem2")
    fit.envelope = envelope
    fit.envelope_ratio = errors / envelope
    fit.extras["scaled_limit"] = np.exp(log_ratio) * float(np.exp(
        np.real(log_pi(model, s, rtol=rtol))))
    fit.extras["envelope_slope"] = -model.mu / model.nu
    return fit


def rate_corollary1(model: ModelSpec, t_grid, rtol: float = 1e-10,
                    slope_tol: float = 0.15, rsq_min: float = 0.99,
                    method: str = "quad", window_decades: float = 2.0,
                    floor: float = 1e-8) -> RateFit:
    """Rate of exp(T(t)) p_00(t) toward pi(0) = e * B(0), via p_00 = P(t; 0)."""
    fit = rate_theorem2(model, 0.0, t_grid, rtol=rtol, slope_tol=slope_tol,
                        rsq_min=rsq_min, method=method,
                        window_decades=window_decades, floor=floor)
    fit.label = "corollary1"
    fit.extras["B0"] = float(np.real(compute_B(model, 0.0, rtol=rtol)))
    return fit


def uniformity_ratio(model: ModelSpec, s_values, t_grid, rtol: float = 1e-10,
                     method: str = "quad") -> np.ndarray:
    """max over s of rho(t; s)/rho(t; 0) along the grid (transient case)."""
    t_grid = np.asarray(t_grid, dtype=float)
    base = np.abs(np.expm1(_transient_log_ratio(model, 0.0, t_grid, rtol, method)))
    worst = np.ones_like(base)
    for s in s_values:
        if s == 0.0:
            continue
        rho = np.abs(np.expm1(_transient_log_ratio(model, float(s), t_grid,
                                                   rtol, method)))
        worst = np.maximum(worst, rho / base)
    return worst


@dataclass
class LemmaReport:
    """Grid diagnostics for one auxiliary asymptotic statement."""

    name: str
    t_grid: np.ndarray
    values: np.ndarray            # the normalized statistic per grid point
    bound: float                  # declared admissible bound
    details: dict = field(default_factory=dict)

    @property
    def sup(self) -> float:
        return float(np.max(self.values))

    def ok(self) -> bool:
        return self.sup <= self.bound


def check_lemma1(model: ModelSpec, s_grid, t_grid, rtol: float = 1e-10,
                 final_tol: float = 1e-3, method: str = "auto") -> LemmaReport:
    """Deviation of 1/R(t;s) from ((nu t)^{1/nu}/N(t)) (1 + M(s)/t)^{1/nu}.

    The representation is asymptotic: the relative deviation must decay
    toward 0 along the time grid for every s, reaching ``final_tol`` at the
    last point.
    """
    ctx = model.context()
    t_grid = np.asarray(t_grid, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    dev = np.empty((s_grid.size, t_grid.size))
    for a, s in enumerate(s_grid):
        Ms = ctx.M(float(s), rtol=rtol)
        for b, t in enumerate(t_grid):
            gv = solve_F(model, float(t), float(s), rtol=rtol, method=method)
            rhs = ((ctx.nu * t) ** (1.0 / ctx.nu) / ctx.script_N(float(t))
                   * (1.0 + Ms / t) ** (1.0 / ctx.nu))
            dev[a, b] = abs(float(np.real(gv.R)) * rhs - 1.0)
    decreasing = bool(np.all(np.diff(dev, axis=1) <= 1e-12 + dev[:, :-1] * 1e-6))
    report = LemmaReport(name="lemma1", t_grid=t_grid, values=dev[:, -1],
                         bound=final_tol,
                         details={"deviation": dev, "decreasing": decreasing,
                                  "s_grid": s_grid})
    return report


def check_lemma2(model: ModelSpec, s: float, t_grid, rtol: float = 1e-10,
                 bound: float = 2.0, method: str = "auto") -> LemmaReport:
    """Remainder of 1/Lambda(R(t;s)) - 1/Lambda(1-s) = nu*t + O(log nu(t;s)).

    Reports remainder(t)/log(nu(t;s)), which must stay bounded.
    """
    ctx = model.context()
    t_grid = np.asarray(t_grid, dtype=float)
    lam0 = 1.0 / float(ctx.Lambda(1.0 - s))
    stats = np.empty(t_grid.size)
    remainders = np.empty(t_grid.size)
    for k, t in enumerate(t_grid):
        gv = solve_F(model, float(t), float(s), rtol=rtol, method=method)
        R = float(np.real(gv.R))
        remainder = abs(1.0 / float(ctx.Lambda(R)) - lam0 - ctx.nu * t)
        lognu = np.log(float(ctx.nu_shift(float(t), s)))
        remainders[k] = remainder
        stats[k] = remainder / lognu if lognu > 0 else 0.0
    return LemmaReport(name="lemma2", t_grid=t_grid, values=stats, bound=bound,
                       details={"remainders": remainders, "s": s})


def check_lemma3(spec: SlowlyVaryingSpec, sigma: float, t_grid,
                 rtol: float = 1e-10, bound: float = 2.0,
                 remainder=None) -> LemmaReport:
    """Tail-integral asymptotic for a slowly varying L with remainder rho:

        integral_t^inf y^{-(1+sigma)} L(y) dy
            = (1/sigma) t^{-sigma} L(t) (1 + O(rho(t))).

    The substitution q = (t/y)^sigma maps the integral exactly onto
    (1/sigma) t^{-sigma} integral_0^1 L(t q^{-1/sigma}) dq, so the reported
    statistic is |mean_q L(t q^{-1/sigma}) / L(t) - 1| / rho(t).
    """
    if not sigma > 0:
        raise ModelError("lemma-3 check needs sigma > 0")
    rho = remainder or spec.remainder
    if rho is None:
        raise ModelError("no remainder declared for this slowly varying spec")
    t_grid = np.asarray(t_grid, dtype=float)
    stats = np.empty(t_grid.size)
    ratios = np.empty(t_grid.size)
    for k, t in enumerate(t_grid):
        def fun(q):
            return np.asarray(spec(t * q ** (-1.0 / sigma)), dtype=float)
        val, _ = doubling_quadrature(fun, 0.0, 1.0, rtol=rtol)
        ratio = float(val[0]) / float(spec(t))
        ratios[k] = ratio
        stats[k] = abs(ratio - 1.0) / float(rho(t))
    return LemmaReport(name="lemma3", t_grid=t_grid, values=stats, bound=bound,
                       details={"ratios": ratios, "sigma": sigma})


def check_lemma4(model: ModelSpec, x_grid, rtol: float = 1e-10,
                 bound: float = 2.0) -> LemmaReport:
    """Near-1 behavior of the tail integral in the recurrent regime:

        integral_x^1 g/f du = (1/gamma) g(x)/Lambda(1-x) (1 + O(Lambda(1-x))).

    Reports |ratio - 1| / Lambda(1-x) over the x grid.
    """
    if not model.gamma > 0:
        raise PreconditionError("lemma-4 check needs gamma > 0")
    ctx = model.context()
    x_grid = np.asarray(x_grid, dtype=float)
    stats = np.empty(x_grid.size)
    ratios = np.empty(x_grid.size)
    for k, x in enumerate(x_grid):
        lhs, _ = gf_integral_to_one(model, float(x), rtol=rtol)
        w = 1.0 - x
        g_val = -w ** model.delta * float(ctx.ell(1.0 / w))
        lam = float(ctx.Lambda(w))
        rhs = g_val / (model.gamma * lam)
        ratio = float(np.real(lhs)) / rhs
        ratios[k] = ratio
        stats[k] = abs(ratio - 1.0) / lam
    return LemmaReport(name="lemma4", t_grid=x_grid, values=stats, bound=bound,
                       details={"ratios": ratios})


def lemma_csv(report: LemmaReport) -> str:
    """Comma-separated (t, statistic) rows plus a summary comment block."""
    lines = [
        f"# check = {report.name}",
        f"# bound = {report.bound:.17g}",
        f"# sup = {report.sup:.17g}",
        f"# verdict = {'pass' if report.ok() else 'fail'}",
        "t,statistic",
    ]
    for t, v in zip(report.t_grid, report.values):
        lines.append(f"{t:.17g},{v:.17g}")
    return "\n".join(lines) + "\n"


def rate_csv(fit: RateFit) -> str:
    """Comma-separated (t, error, predicted_envelope, ratio) plus a summary
    comment block."""
    lines = [
        f"# label = {fit.label}",
        f"# fitted_slope = {fit.fitted_slope:.17g}",
        f"# predicted_slope = {fit.predicted_slope:.17g}",
        f"# r_squared = {fit.r_squared:.17g}",
        f"# verdict = {'pass' if fit.verdict else 'fail'}",
        "t,error,predicted_envelope,ratio",
    ]
    env = fit.envelope if fit.envelope is not None else np.full_like(fit.errors, np.nan)
    ratio = (fit.envelope_ratio if fit.envelope_ratio is not None
             else np.full_like(fit.errors, np.nan))
    for t, e, ev, ra in zip(fit.t_grid, fit.errors, env, ratio):
        lines.append(f"{t:.17g},{e:.17g},{ev:.17g},{ra:.17g}")
    return "\n".join(lines) + "\n"
