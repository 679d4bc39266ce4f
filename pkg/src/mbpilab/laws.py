"""Offspring and immigration intensity families.

A critical offspring law is a sequence a_0..a_J with a_0 > 0, a_1 < 0,
a_j >= 0 otherwise, zero total mass (sum a_j = 0) and zero drift
(sum j*a_j = 0); its generating function is f(s) = sum a_j s^j.  An
immigration law has b_0 < 0, b_j >= 0 for j >= 1 and zero total mass;
g(s) = sum b_j s^j.

The built-in stable families are

    f(s) = c * ((1-s)**(1+nu) + kappa*(1-s)**(1+2*nu)),
    g(s) = -d * ((1-s)**delta  + kappa*(1-s)**(2*delta)),

whose tail functions are L(x) = c*(1 + kappa*x**(-nu)) and
ell(x) = d*(1 + kappa*x**(-delta)).  Coefficients come from the
generalized binomial expansion, truncated at order J; the residual mass is
folded into the last coefficient and the linear term is re-balanced so the
truncated law is exactly conservative and exactly critical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ModelError, PreconditionError
from .rvcalc import RVContext, SlowlyVaryingSpec, sv_constant, sv_perturbed

DEFAULT_TRUNCATION = 2000
MASS_TOL = 1e-9
CRIT_TOL = 1e-9


def _signed_binomials(alpha: float, J: int) -> np.ndarray:
    """Return (-1)**j * binom(alpha, j) for j = 0..J via the stable recurrence."""
    out = np.empty(J + 1)
    out[0] = 1.0
    for j in range(J):
        out[j + 1] = out[j] * (j - alpha) / (j + 1.0)
    return out


def _check_unit_disc(z):
    if np.any(np.abs(np.asarray(z)) > 1.0 + 1e-12):
        raise ModelError("generating functions are only evaluated for |z| <= 1")


class _IntensityLaw:
    """Shared evaluation logic; concrete classes below fix the closed forms."""

    def gf(self, z, mode: str = "auto"):
        """Evaluate the generating function at z, |z| <= 1.

        mode: "auto" prefers the closed form when the law carries one,
        "closed" demands it, "series" sums the truncated coefficients.
        """
        _check_unit_disc(z)
        if mode == "auto":
            mode = "closed" if self.closed_form else "series"
        if mode == "closed":
            if not self.closed_form:
                raise ModelError("law has no closed form")
            return self._closed_gf(np.asarray(z))
        if mode == "series":
            return npoly.polyval(np.asarray(z), self.coefficients)
        raise ModelError(f"unknown evaluation mode {mode!r}")

    def gf_at_one_minus(self, y, mode: str = "auto"):
        """Evaluate the generating function at 1 - y.

        The closed forms take y directly, which is the numerically safe way
        to evaluate near the fixed point (y -> 0).
        """
        if mode == "auto":
            mode = "closed" if self.closed_form else "series"
        if mode == "closed":
            if not self.closed_form:
                raise ModelError("law has no closed form")
            return self._closed_gf_one_minus(np.asarray(y))
        return self.gf(1.0 - np.asarray(y), mode=mode)


@dataclass(frozen=True)
class BranchingLaw(_IntensityLaw):
    coefficients: np.ndarray
    truncation_order: int
    nu: Optional[float] = None
    sv_spec: Optional[SlowlyVaryingSpec] = None
    closed_form: Optional[str] = None      # "stable" | "stable-perturbed"
    scale: Optional[float] = None          # c
    kappa: float = 0.0
    series_tail_bound: float = 0.0

    def _closed_gf(self, z):
        w = 1.0 - z
        val = w ** (1.0 + self.nu)
        if self.kappa:
            val = val + self.kappa * w ** (1.0 + 2.0 * self.nu)
        return self.scale * val

    def _closed_gf_one_minus(self, y):
        val = y ** (1.0 + self.nu)
        if self.kappa:
            val = val + self.kappa * y ** (1.0 + 2.0 * self.nu)
        return self.scale * val


@dataclass(frozen=True)
class ImmigrationLaw(_IntensityLaw):
    coefficients: np.ndarray
    truncation_order: int
    delta: Optional[float] = None
    sv_spec: Optional[SlowlyVaryingSpec] = None
    closed_form: Optional[str] = None
    scale: Optional[float] = None          # d
    kappa: float = 0.0
    series_tail_bound: float = 0.0

    def _closed_gf(self, z):
        w = 1.0 - z
        val = w ** self.delta
        if self.kappa:
            val = val + self.kappa * w ** (2.0 * self.delta)
        return -self.scale * val

    def _closed_gf_one_minus(self, y):
        val = y ** self.delta
        if self.kappa:
            val = val + self.kappa * y ** (2.0 * self.delta)
        return -self.scale * val


def make_stable_offspring(nu: float, c: float, kappa: float = 0.0,
                          J: int = DEFAULT_TRUNCATION) -> BranchingLaw:
    """Truncated, re-balanced coefficients of c((1-s)^(1+nu) + kappa(1-s)^(1+2nu))."""
    if not 0.0 < nu < 1.0:
        raise ModelError("offspring tail index nu must lie in (0, 1); the "
                         "finite-variance boundary nu = 1 is unsupported")
    if not c > 0:
        raise ModelError("offspring scale c must be positive")
    if kappa < 0:
        raise ModelError("perturbation weight kappa must be nonnegative")
    J = int(J)
    if J < 2:
        raise ModelError("offspring truncation order must be at least 2")
    a = c * _signed_binomials(1.0 + nu, J)
    if kappa:
        a = a + c * kappa * _signed_binomials(1.0 + 2.0 * nu, J)
    s0 = math.fsum(a)
    s1 = math.fsum(j * aj for j, aj in enumerate(a))
    d_last = (s0 - s1) / (J - 1.0)
    d_lin = -s0 - d_last
    a[J] += d_last
    a[1] += d_lin
    if a[0] <= 0 or a[1] >= 0 or np.any(a[2:] < 0):
        raise ModelError(
            "sign pattern broken after truncation adjustment; kappa is too "
            "large for the (1+2*nu) branch (this always happens eventually "
            "when 2*nu >= 1)")
    tail = abs(s0) + abs(d_lin) + abs(d_last)
    spec = sv_perturbed(c, kappa, nu) if kappa else sv_constant(c)
    return BranchingLaw(coefficients=a, truncation_order=J, nu=nu,
                        sv_spec=spec,
                        closed_form="stable-perturbed" if kappa else "stable",
                        scale=c, kappa=kappa, series_tail_bound=tail)


def make_stable_immigration(delta: float, d: float, kappa: float = 0.0,
                            J: int = DEFAULT_TRUNCATION) -> ImmigrationLaw:
    """Truncated, re-balanced coefficients of -d((1-s)^delta + kappa(1-s)^(2delta))."""
    if not 0.0 < delta < 1.0:
        raise ModelError("immigration tail index delta must lie in (0, 1); "
                         "the finite-mean boundary delta = 1 is unsupported")
    if not d > 0:
        raise ModelError("immigration scale d must be positive")
    if kappa < 0:
        raise ModelError("perturbation weight kappa must be nonnegative")
    J = int(J)
    if J < 1:
        raise ModelError("immigration truncation order must be at least 1")
    b = -d * _signed_binomials(delta, J)
    if kappa:
        b = b - d * kappa * _signed_binomials(2.0 * delta, J)
    s0 = math.fsum(b)
    b[J] += -s0
    if b[0] >= 0 or np.any(b[1:] < 0):
        raise ModelError("sign pattern broken after truncation adjustment; "
                         "kappa is too large for the 2*delta branch")
    tail = 2.0 * abs(s0)
    spec = sv_perturbed(d, kappa, delta) if kappa else sv_constant(d)
    return ImmigrationLaw(coefficients=b, truncation_order=J, delta=delta,
                          sv_spec=spec,
                          closed_form="stable-perturbed" if kappa else "stable",
                          scale=d, kappa=kappa, series_tail_bound=tail)


def offspring_from_coefficients(coefficients: Sequence[float],
                                nu: Optional[float] = None,
                                sv_spec: Optional[SlowlyVaryingSpec] = None) -> BranchingLaw:
    a = np.asarray(list(coefficients), dtype=float)
    if a.size < 3:
        raise ModelError("an offspring law needs at least coefficients a_0..a_2")
    return BranchingLaw(coefficients=a, truncation_order=a.size - 1, nu=nu,
                        sv_spec=sv_spec)


def immigration_from_coefficients(coefficients: Sequence[float],
                                  delta: Optional[float] = None,
                                  sv_spec: Optional[SlowlyVaryingSpec] = None) -> ImmigrationLaw:
    b = np.asarray(list(coefficients), dtype=float)
    if b.size < 2:
        raise ModelError("an immigration law needs at least coefficients b_0..b_1")
    return ImmigrationLaw(coefficients=b, truncation_order=b.size - 1, delta=delta,
                          sv_spec=sv_spec)


def parse_coefficient_text(text: str) -> np.ndarray:
    """Parse a comma-separated coefficient list (whitespace tolerated)."""
    items = [tok.strip() for tok in text.replace("\n", ",").split(",") if tok.strip()]
    if not items:
        raise ModelError("empty coefficient list")
    try:
        return np.array([float(tok) for tok in items])
    except ValueError as exc:
        raise ModelError(f"unparseable coefficient: {exc}") from None


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    detail: str = ""


@dataclass
class ValidationReport:
    law_kind: str
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def format(self) -> str:
        lines = [f"[{self.law_kind}]"]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"  {c.name:<16} {status}  residual={c.residual:.3e}"
                         + (f"  {c.detail}" if c.detail else ""))
        return "\n".join(lines)


def validate_law(law, tol_mass: float = MASS_TOL, tol_crit: float = CRIT_TOL) -> ValidationReport:
    """Report-only validation of the intensity constraints."""
    a = law.coefficients
    checks = []
    if isinstance(law, BranchingLaw):
        checks.append(CheckResult("a0_positive", bool(a[0] > 0), float(-min(a[0], 0.0))))
        checks.append(CheckResult("a1_negative", bool(a[1] < 0), float(max(a[1], 0.0))))
        worst = float(np.min(a[2:])) if a.size > 2 else 0.0
        checks.append(CheckResult("sign_pattern", bool(worst >= 0), abs(min(worst, 0.0)),
                                  detail="a_j >= 0 for j >= 2"))
        mass = math.fsum(a)
        checks.append(CheckResult("mass_balance", abs(mass) <= tol_mass, abs(mass)))
        drift = math.fsum(j * aj for j, aj in enumerate(a))
        checks.append(CheckResult("criticality", abs(drift) <= tol_crit, abs(drift)))
        return ValidationReport("offspring", checks)
    if isinstance(law, ImmigrationLaw):
        checks.append(CheckResult("b0_negative", bool(a[0] < 0), float(max(a[0], 0.0))))
        worst = float(np.min(a[1:])) if a.size > 1 else 0.0
        checks.append(CheckResult("sign_pattern", bool(worst >= 0), abs(min(worst, 0.0)),
                                  detail="b_j >= 0 for j >= 1"))
        mass = math.fsum(a)
        checks.append(CheckResult("mass_balance", abs(mass) <= tol_mass, abs(mass)))
        return ValidationReport("immigration", checks)
    raise ModelError(f"cannot validate object of type {type(law).__name__}")


@dataclass(frozen=True)
class ModelSpec:
    """An offspring/immigration pair plus the derived indices.

    gamma = delta - nu separates the positive-recurrent (gamma > 0) and
    transient (gamma < 0) regimes; gamma = 0 is a different process and is
    rejected.  mu = 2*delta - nu controls the transient-case rate.
    """

    offspring: BranchingLaw
    immigration: ImmigrationLaw

    def __post_init__(self):
        if self.offspring.nu is None or self.immigration.delta is None:
            raise ModelError("ModelSpec needs laws with declared tail indices")
        if self.gamma == 0.0:
            raise PreconditionError("gamma = delta - nu = 0 is out of scope")

    @property
    def nu(self) -> float:
        return self.offspring.nu

    @property
    def delta(self) -> float:
        return self.immigration.delta

    @property
    def gamma(self) -> float:
        return self.immigration.delta - self.offspring.nu

    @property
    def mu(self) -> float:
        return 2.0 * self.immigration.delta - self.offspring.nu

    @property
    def C_L(self) -> Optional[float]:
        return None if self.offspring.sv_spec is None else self.offspring.sv_spec.limit

    @property
    def C_ell(self) -> Optional[float]:
        return None if self.immigration.sv_spec is None else self.immigration.sv_spec.limit

    @property
    def C_ratio(self) -> Optional[float]:
        if self.C_L is None or self.C_ell is None:
            return None
        return self.C_ell / self.C_L

    @property
    def has_closed_form(self) -> bool:
        return bool(self.offspring.closed_form and self.immigration.closed_form)

    def context(self) -> RVContext:
        if self.offspring.sv_spec is None or self.immigration.sv_spec is None:
            raise ModelError("both laws must carry slowly varying specs")
        return RVContext(nu=self.nu, delta=self.delta,
                         L=self.offspring.sv_spec, ell=self.immigration.sv_spec)

    def require_transient_limit(self, tol_cl: float = 1e-9) -> None:
        """Raise unless gamma < 0, mu > 0 and C_ell/C_L = |gamma| (to tol_cl)."""
        if not self.gamma < 0:
            raise PreconditionError("transient-limit computations need gamma < 0")
        if not self.mu > 0:
            raise PreconditionError("transient-limit computations need mu = 2*delta - nu > 0")
        cr = self.C_ratio
        if cr is None:
            raise PreconditionError("laws without limit constants cannot satisfy C = |gamma|")
        if abs(cr - abs(self.gamma)) > tol_cl:
            raise PreconditionError(
                f"C_ell/C_L = {cr:.12g} differs from |gamma| = {abs(self.gamma):.12g}; "
                "the transient limit requires exact equality (pair d/c = |gamma|)")


def stable_model(nu: float, c: float, delta: float, d: float,
                 kappa_offspring: float = 0.0, kappa_immigration: float = 0.0,
                 J: int = DEFAULT_TRUNCATION) -> ModelSpec:
    """Convenience constructor for the built-in family pair."""
    return ModelSpec(make_stable_offspring(nu, c, kappa_offspring, J),
                     make_stable_immigration(delta, d, kappa_immigration, J))


def law_to_kv(law) -> str:
    """Serialize a built-in law to a plain-text key=value block."""
    if isinstance(law, BranchingLaw):
        if not law.closed_form:
            raise ModelError("only the stable families serialize to key=value")
        return "\n".join([
            "family = stable-offspring",
            f"nu = {law.nu!r}",
            f"c = {law.scale!r}",
            f"kappa = {law.kappa!r}",
            f"truncation = {law.truncation_order}",
        ])
    if isinstance(law, ImmigrationLaw):
        if not law.closed_form:
            raise ModelError("only the stable families serialize to key=value")
        return "\n".join([
            "family = stable-immigration",
            f"delta = {law.delta!r}",
            f"d = {law.scale!r}",
            f"kappa = {law.kappa!r}",
            f"truncation = {law.truncation_order}",
        ])
    raise ModelError(f"cannot serialize {type(law).__name__}")


def law_from_kv(text: str):
    """Parse the key=value block produced by :func:`law_to_kv`."""
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ModelError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    family = fields.get("family")
    try:
        if family == "stable-offspring":
            return make_stable_offspring(float(fields["nu"]), float(fields["c"]),
                                         float(fields.get("kappa", "0")),
                                         int(fields.get("truncation", DEFAULT_TRUNCATION)))
        if family == "stable-immigration":
            return make_stable_immigration(float(fields["delta"]), float(fields["d"]),
                                           float(fields.get("kappa", "0")),
                                           int(fields.get("truncation", DEFAULT_TRUNCATION)))
    except KeyError as exc:
        raise ModelError(f"missing field {exc.args[0]!r} for family {family!r}") from None
    raise ModelError(f"unknown family {family!r}")


def with_coefficient(law, index: int, value: float):
    """Return a copy of ``law`` with one coefficient replaced (validation fodder)."""
    coeffs = law.coefficients.copy()
    coeffs[index] = value
    return replace(law, coefficients=coeffs)


FAMILY_NOTES = """\
Built-in law families
=====================

stable-offspring(nu, c, kappa=0, truncation=2000)
    f(s) = c*((1-s)**(1+nu) + kappa*(1-s)**(1+2*nu)),  0 < nu < 1
    Critical, conservative; offspring tail function L(x) = c*(1+kappa*x**-nu).
    Satisfies: offspring-tail(nu); sv-remainder with alpha(x) = x**-nu
    (exactly constant L when kappa = 0).

stable-immigration(delta, d, kappa=0, truncation=2000)
    g(s) = -d*((1-s)**delta + kappa*(1-s)**(2*delta)),  0 < delta < 1
    Immigration tail function ell(x) = d*(1+kappa*x**-delta).
    Satisfies: immigration-tail(delta); sv-remainder with beta(x) = x**-delta.

Pairings
--------
gamma = delta - nu.  gamma > 0: positive-recurrent regime (invariant
distribution U).  gamma < 0: transient regime; the scaled limit measure
requires mu = 2*delta - nu > 0 and the exact pairing d/c = |gamma|.
gamma = 0 is a different process and is rejected.

Truncation folds residual mass into the last coefficient and re-balances
the linear term, so every generated law is exactly conservative (and the
offspring law exactly critical) at machine precision.
"""


def describe_families() -> str:
    """Static text describing the built-in families (stable across runs)."""
    return FAMILY_NOTES
