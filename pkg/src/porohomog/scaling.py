"""Power-law scaling of the dimensionless parameters and regime selection.

Every parameter is ``alpha(eps) = c * eps**a`` with ``c > 0`` and rational
``a``, so each limit as ``eps -> 0`` is decided exactly by the sign of an
exponent.  ``classify`` maps a set of limits (plus pore connectivity and a
declared forcing class) to the homogenized model, the cell problems that
model needs and the parameter values to feed them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

PARAMETERS = ("tau", "nu", "mu", "p", "eta", "lam")

# regime tags
ANISOTROPIC_LAME = "anisotropic_lame"
BIOT = "biot"
FILTRATION_MEMORY = "filtration_memory"
FILTRATION_DARCY = "filtration_darcy"
FILTRATION_INVISCID = "filtration_inviscid"
RIGID_SKELETON_LAME = "rigid_skeleton_lame"
STIFF_SKELETON_BIOT = "stiff_skeleton_biot"
VISCOELASTIC = "viscoelastic"
NONLOCAL_LAME = "nonlocal_lame"
REGIME_TAGS = (ANISOTROPIC_LAME, BIOT, FILTRATION_MEMORY, FILTRATION_DARCY, FILTRATION_INVISCID,
               RIGID_SKELETON_LAME, STIFF_SKELETON_BIOT, VISCOELASTIC, NONLOCAL_LAME)

# Darcy laws: relaxation kernel, steady permeability, inviscid time integral
DARCY_MEMORY = "memory_kernel"
DARCY_STEADY = "steady_permeability"
DARCY_INVISCID = "inviscid_integral"

CELL_PROBLEMS = ("elastic_cell", "steady_stokes", "unsteady_stokes", "neumann_B3",
                 "visco_I", "visco_II")
FORCING_CLASSES = ("bounded_pressure", "potential", "solid_supported")


class ScalingError(ValueError):
    pass


class InadmissibleParameters(ScalingError):
    def __init__(self, report: "AdmissibilityReport"):
        self.report = report
        super().__init__("inadmissible parameters: " + "; ".join(report.violations))


class OutsideCoverage(ScalingError):
    def __init__(self, hypothesis: str):
        self.hypothesis = hypothesis
        super().__init__(f"outside model coverage: {hypothesis}")


@dataclass(frozen=True)
class ExtReal:
    """``Zero``, ``Finite(v)`` with ``v > 0``, or ``Infinite``."""

    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "finite", "infinite"):
            raise ValueError(f"unknown ExtReal kind {self.kind!r}")
        if self.kind == "finite" and not (self.value > 0 and math.isfinite(self.value)):
            raise ValueError("Finite payload must be a positive real")

    @classmethod
    def of(cls, x) -> "ExtReal":
        if isinstance(x, ExtReal):
            return x
        x = float(x)
        if x == 0:
            return ZERO
        if x == math.inf:
            return INFINITE
        return cls("finite", x)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def is_infinite(self) -> bool:
        return self.kind == "infinite"

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def bounded(self) -> bool:
        return self.kind != "infinite"

    @property
    def positive(self) -> bool:
        return self.kind != "zero"

    def __float__(self) -> float:
        return {"zero": 0.0, "infinite": math.inf}.get(self.kind, self.value)

    def __str__(self) -> str:
        if self.kind == "finite":
            return f"Finite({self.value!r})"
        return "Zero" if self.is_zero else "Infinite"


ZERO = ExtReal("zero")
INFINITE = ExtReal("infinite")


def Finite(v: float) -> ExtReal:
    return ExtReal("finite", float(v))


@dataclass(frozen=True)
class Power:
    """``c * eps**a``."""

    c: float
    a: Fraction

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ScalingError(f"coefficient must be a positive real, got {self.c!r}")
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "a", Fraction(self.a))

    def __mul__(self, other: "Power") -> "Power":
        return Power(self.c * other.c, self.a + other.a)

    def __truediv__(self, other: "Power") -> "Power":
        return Power(self.c / other.c, self.a - other.a)

    def __str__(self) -> str:
        return f"{self.c!r}*eps^({self.a})"


EPS2 = Power(1.0, Fraction(2))
ONE = Power(1.0, Fraction(0))


def _power(x) -> Power:
    if isinstance(x, Power):
        return x
    c, a = x
    return Power(float(c), Fraction(a))


def limit_of(pair) -> ExtReal:
    """Limit of ``c * eps**a`` as ``eps -> 0``."""
    pw = _power(pair)
    if pw.a > 0:
        return ZERO
    if pw.a == 0:
        return Finite(pw.c)
    return INFINITE


@dataclass(frozen=True)
class ScalingSpec:
    tau: Power
    nu: Power
    mu: Power
    p: Power
    eta: Power
    lam: Power
    rho_f: float = 1.0
    rho_s: float = 1.0
    # w_original = w / displacement_scale after re-normalization
    displacement_scale: Power = ONE
    remappings: tuple = ()

    def __post_init__(self):
        for name in PARAMETERS:
            object.__setattr__(self, name, _power(getattr(self, name)))
        object.__setattr__(self, "displacement_scale", _power(self.displacement_scale))
        for rho in ("rho_f", "rho_s"):
            if not (getattr(self, rho) > 0):
                raise ScalingError(f"{rho} must be positive")

    @classmethod
    def from_exponents(cls, rho_f=1.0, rho_s=1.0, **pairs) -> "ScalingSpec":
        """Keyword pairs ``mu=(c, a)`` or bare exponents ``mu=a`` (``c = 1``)."""
        unknown = set(pairs) - set(PARAMETERS)
        if unknown:
            raise ScalingError(f"unknown parameters {sorted(unknown)}")
        kw = {}
        for name in PARAMETERS:
            v = pairs.get(name, 0)
            kw[name] = _power(v if isinstance(v, (tuple, Power)) else (1.0, v))
        return cls(rho_f=rho_f, rho_s=rho_s, **kw)

    def rescaled(self, k: Power, note: str) -> "ScalingSpec":
        """Divide every parameter by ``k``, i.e. substitute ``w -> k w``."""
        kw = {name: getattr(self, name) / k for name in PARAMETERS}
        return replace(self, displacement_scale=self.displacement_scale * k,
                       remappings=self.remappings + (note,), **kw)


@dataclass(frozen=True)
class LimitSet:
    mu0: ExtReal
    lambda0: ExtReal
    tau0: ExtReal
    nu0: ExtReal
    p_star: ExtReal
    eta0: ExtReal
    mu1: ExtReal
    p1: ExtReal
    lambda1: ExtReal
    eta1: ExtReal
    eta2: ExtReal
    p2: ExtReal
    # exponent form the limits came from; needed only for re-normalization
    source: ScalingSpec | None = field(default=None, compare=False)

    @classmethod
    def from_values(cls, **values) -> "LimitSet":
        """Direct constructor for scalings that are not power laws.

        Each value may be an ``ExtReal`` or a float (``0`` and ``inf``
        map to ``Zero`` and ``Infinite``).
        """
        names = [f.name for f in cls.__dataclass_fields__.values() if f.name != "source"]
        missing = set(names) - set(values)
        if missing:
            raise ScalingError(f"missing limits {sorted(missing)}")
        unknown = set(values) - set(names)
        if unknown:
            raise ScalingError(f"unknown limits {sorted(unknown)}")
        return cls(**{k: ExtReal.of(v) for k, v in values.items()})

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "source"}


def derive_limits(spec: ScalingSpec) -> LimitSet:
    s = spec
    return LimitSet(
        mu0=limit_of(s.mu),
        lambda0=limit_of(s.lam),
        tau0=limit_of(s.tau),
        nu0=limit_of(s.nu),
        p_star=limit_of(s.p),
        eta0=limit_of(s.eta),
        mu1=limit_of(s.mu / EPS2),
        p1=limit_of(EPS2 * s.p / s.mu),
        lambda1=limit_of(s.lam * EPS2 / s.mu),
        eta1=limit_of(s.eta * EPS2 / s.mu),
        eta2=limit_of(s.eta / s.lam),
        p2=limit_of(s.p / s.lam),
        source=spec,
    )


@dataclass(frozen=True)
class AdmissibilityReport:
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def check_admissible(limits: LimitSet) -> AdmissibilityReport:
    bad = []
    if limits.p_star.is_zero:
        bad.append("p*^{-1} < ∞ fails")
    if limits.mu0.is_infinite:
        bad.append("μ₀ < ∞ fails")
    if limits.nu0.is_infinite:
        bad.append("ν₀ < ∞ fails")
    if limits.lambda0.is_zero:
        bad.append("λ₀^{-1} < ∞ fails")
    if limits.tau0.is_zero and limits.mu1.is_zero:
        bad.append("0 < τ₀ + μ₁ fails")
    return AdmissibilityReport(tuple(bad))


def apply_tau_renormalization(spec: ScalingSpec) -> ScalingSpec:
    """Substitute ``w -> alpha_tau w`` so that the inertia coefficient becomes 1."""
    if not limit_of(spec.tau).is_infinite:
        raise ScalingError("τ re-normalization not applicable: τ₀ is finite")
    return spec.rescaled(spec.tau, f"w -> ({spec.tau}) w: every α divided by α_τ")


@dataclass(frozen=True)
class Renormalization:
    displacement_scale: Power = ONE
    remappings: tuple = ()

    @property
    def trivial(self) -> bool:
        return self.displacement_scale == ONE and not self.remappings


@dataclass(frozen=True)
class Regime:
    tag: str
    renormalization: Renormalization
    required_cell_problems: frozenset
    bindings: dict
    darcy_law: str | None = None
    forcing_route: str | None = None
    companions: tuple = ()
    limits: LimitSet | None = field(default=None, compare=False)
    notes: tuple = ()

    @property
    def all_cell_problems(self) -> frozenset:
        out = set(self.required_cell_problems)
        for c in self.companions:
            out |= c.all_cell_problems
        return frozenset(out)


def _darcy(mu1: ExtReal, tau0: ExtReal, rho_f):
    """Darcy law choice and the fluid cell problem with its bindings."""
    if mu1.is_zero:
        return DARCY_INVISCID, "neumann_B3", {}
    if tau0.is_zero:
        return DARCY_STEADY, "steady_stokes", {"mu1": float(mu1)}
    return DARCY_MEMORY, "unsteady_stokes", {"mu1": float(mu1), "tau0": float(tau0),
                                             "rho_f": rho_f}


def _isolated(conn) -> bool:
    if conn is None:
        raise OutsideCoverage("pore connectivity is needed for this branch but no geometry "
                              "was given")
    return bool(conn.pores_isolated)


def _no_stokes_if_isolated(conn, problem: str):
    # this branch does not depend on geometry; only a known isolation is refused
    if conn is None:
        return
    if problem in ("steady_stokes", "unsteady_stokes") and _isolated(conn):
        raise OutsideCoverage("a Darcy law from Stokes cell flow needs a connected pore space")


def classify(limits: LimitSet, conn=None, forcing_class: str = "bounded_pressure",
             _renorm: Renormalization = Renormalization()) -> Regime:
    """Select the homogenized model for ``limits``.

    ``conn`` is a ``Connectivity`` (only ``pores_isolated`` is read) and
    may be ``None`` when the chosen branch does not depend on geometry.
    ``forcing_class`` declares which a-priori estimate the forcing
    supports: ``bounded_pressure`` (bounded pressures, needs p* < ∞),
    ``potential`` (potential forcing, needs p₂ > 0) or
    ``solid_supported`` (forcing acting on the solid only).
    """
    if forcing_class not in FORCING_CLASSES:
        raise ScalingError(f"unknown forcing class {forcing_class!r}")
    L = limits
    rho_f = L.source.rho_f if L.source is not None else None

    # the inertia re-normalization comes before the admissibility check
    if L.tau0.is_infinite:
        if L.source is None:
            raise OutsideCoverage("τ₀ = ∞ needs the exponent form for re-normalization")
        spec = apply_tau_renormalization(L.source)
        return classify(derive_limits(spec), conn, forcing_class,
                        _merge(_renorm, L.source.tau, spec.remappings[-1]))

    report = check_admissible(L)
    if not report.ok:
        raise InadmissibleParameters(report)

    # elastic skeleton of finite stiffness
    if L.lambda0.is_finite:
        lam0 = float(L.lambda0)
        if L.mu0.is_zero:
            if L.mu1.is_infinite or _isolated(conn):
                return Regime(ANISOTROPIC_LAME, _renorm, frozenset({"elastic_cell"}),
                              {"elastic_cell": {"lambda0": lam0, "eta0": float(L.eta0)}},
                              limits=L)
            law, fluid_problem, fb = _darcy(L.mu1, L.tau0, rho_f)
            bindings = {"elastic_cell": {"lambda0": lam0, "eta0": float(L.eta0)}}
            bindings[fluid_problem] = fb
            return Regime(BIOT, _renorm, frozenset({"elastic_cell", fluid_problem}), bindings,
                          darcy_law=law, limits=L)
        # 0 < mu0 < inf
        visco = {"mu0": float(L.mu0), "lambda0": lam0, "nu0": float(L.nu0),
                 "p_star": float(L.p_star), "eta0": float(L.eta0)}
        tag = NONLOCAL_LAME if _isolated(conn) else VISCOELASTIC
        return Regime(tag, _renorm, frozenset({"visco_I", "visco_II"}),
                      {"visco_I": visco, "visco_II": dict(visco)}, limits=L)

    # rigid skeleton limit: lambda0 = inf
    if L.mu1.bounded:
        if forcing_class == "bounded_pressure" and L.p_star.is_infinite:
            raise OutsideCoverage("bounded-pressure forcing needs p* < ∞")
        if forcing_class == "potential" and L.p2.is_zero:
            raise OutsideCoverage("potential forcing needs p₂ > 0")
        law, fluid_problem, fb = _darcy(L.mu1, L.tau0, rho_f)
        _no_stokes_if_isolated(conn, fluid_problem)
        tag = {DARCY_MEMORY: FILTRATION_MEMORY, DARCY_STEADY: FILTRATION_DARCY,
               DARCY_INVISCID: FILTRATION_INVISCID}[law]
        companions = ()
        notes = ()
        if forcing_class == "potential":
            # second approximation for the skeleton: w -> alpha_lambda w
            lame_renorm = _merge(_renorm, None, "w -> α_λ w: α_η -> α_η/α_λ, α_λ -> 1, "
                                 "α_τ -> α_τ/α_λ", scale=L.source.lam if L.source else None)
            companions = (Regime(RIGID_SKELETON_LAME, lame_renorm, frozenset({"elastic_cell"}),
                                 {"elastic_cell": {"lambda0": 1.0, "eta0": float(L.eta2)}},
                                 forcing_route=forcing_class, limits=L),)
        elif forcing_class == "solid_supported":
            notes = ("second-approximation Lamé system is stated for potential forcing only",)
        return Regime(tag, _renorm, frozenset({fluid_problem}), {fluid_problem: fb},
                      darcy_law=law, forcing_route=forcing_class, companions=companions,
                      limits=L, notes=notes)

    # lambda0 = inf, mu1 = inf
    if L.lambda1.is_finite:
        failed = [n for n, v in (("p₁^{-1} < ∞", L.p1), ("η₁^{-1} < ∞", L.eta1)) if v.is_zero]
        if failed:
            raise OutsideCoverage(", ".join(failed) + " fails with μ₁ = ∞ and 0 < λ₁ < ∞")
        _no_stokes_if_isolated(conn, "steady_stokes")
        scale = L.source.mu / EPS2 if L.source is not None else None
        renorm = _merge(_renorm, None, "w -> α_μ ε^-2 w: μ₁ -> 1, τ₀ -> 0, ν₀ -> 0, "
                        "η₀ -> η₁, λ₀ -> λ₁, p* -> p₁", scale=scale)
        return Regime(STIFF_SKELETON_BIOT, renorm, frozenset({"elastic_cell", "steady_stokes"}),
                      {"elastic_cell": {"lambda0": float(L.lambda1), "eta0": float(L.eta1)},
                       "steady_stokes": {"mu1": 1.0}},
                      darcy_law=DARCY_STEADY, limits=L)
    if L.lambda1.is_zero:
        raise OutsideCoverage("λ₁ > 0 fails with λ₀ = ∞ and μ₁ = ∞")
    # lambda1 = inf: w -> alpha_mu eps^-2 w reduces to the mu1 = 1 case
    if L.source is None:
        raise OutsideCoverage("μ₁ = ∞ and λ₁ = ∞ need the exponent form for re-normalization")
    k = L.source.mu / EPS2
    spec = L.source.rescaled(k, f"w -> ({k}) w: every α divided by α_μ ε^-2")
    new = derive_limits(spec)
    report = check_admissible(new)
    if not report.ok:
        raise OutsideCoverage("re-normalized parameters violate admissibility: "
                              + "; ".join(report.violations))
    return classify(new, conn, forcing_class, _merge(_renorm, k, spec.remappings[-1]))


def _merge(r: Renormalization, k, note: str, scale=None) -> Renormalization:
    k = scale if k is None else k
    ds = r.displacement_scale * k if k is not None else r.displacement_scale
    return Renormalization(ds, r.remappings + (note,))


def classify_spec(spec: ScalingSpec, conn=None, forcing_class: str = "bounded_pressure") -> Regime:
    return classify(derive_limits(spec), conn, forcing_class)


class RegimeClassifier(BaseEstimator):
    """Estimator form of ``classify``: ``fit(spec_or_limits, conn)`` sets ``regime_``."""

    def __init__(self, forcing_class="bounded_pressure"):
        self.forcing_class = forcing_class

    def fit(self, X, conn=None):
        self.limits_ = derive_limits(X) if isinstance(X, ScalingSpec) else X
        self.admissibility_ = check_admissible(self.limits_)
        self.regime_ = classify(self.limits_, conn, self.forcing_class)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "regime_")
        return self.regime_.tag
