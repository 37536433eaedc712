"""Run configuration: ``key = value`` text with ``[section]`` headers.

Keys before the first section header belong to the general section
(``geometry``, ``seed``, ``threads``).  ``#`` starts a comment.  Every
key is checked against the table below before anything is solved;
unknown keys and malformed values are errors.

``[scaling]``
    ``alpha_<name>.c`` / ``alpha_<name>.a`` for ``name`` in ``tau, nu, mu,
    p, eta, lambda`` (coefficient and rational exponent, defaults 1 and 0
    when any scaling key is present), ``rho_f``, ``rho_s``,
    ``forcing_class``; ``limit.<name>`` for all twelve limits instead of
    exponents; ``bind.<name>`` explicit cell-problem parameters.
``[solver]``
    ``tol``, ``method``, ``check_tol``.
``[schedule]``
    ``ratio``, ``first``, ``max_steps``, ``decay``, ``stall``, ``substeps``,
    ``scheme``.
``[output]``
    ``dir``, ``prefix``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import scaling as sc

ALPHA_NAMES = {"tau": "tau", "nu": "nu", "mu": "mu", "p": "p", "eta": "eta", "lambda": "lam"}
LIMIT_NAMES = ("mu0", "lambda0", "tau0", "nu0", "p_star", "eta0", "mu1", "p1", "lambda1",
               "eta1", "eta2", "p2")
BIND_NAMES = ("lambda0", "eta0", "mu0", "nu0", "p_star", "mu1", "tau0")


class ConfigError(ValueError):
    pass


def _positive(v: str) -> float:
    x = float(v)
    if not x > 0:
        raise ValueError("must be positive")
    return x


def _nonneg_ext(v: str) -> float:
    x = float(v)
    if not x >= 0:
        raise ValueError("must be non-negative (inf allowed)")
    return x


def _exponent(v: str) -> Fraction:
    return Fraction(v.strip().replace("−", "-"))


def _int_pos(v: str) -> int:
    x = int(v)
    if x < 1:
        raise ValueError("must be a positive integer")
    return x


def _choice(*options):
    def parse(v: str) -> str:
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return parse


def _scaling_keys() -> dict:
    keys = {"rho_f": _positive, "rho_s": _positive,
            "forcing_class": _choice(*sc.FORCING_CLASSES)}
    for name in ALPHA_NAMES:
        keys[f"alpha_{name}.c"] = _positive
        keys[f"alpha_{name}.a"] = _exponent
    for name in LIMIT_NAMES:
        keys[f"limit.{name}"] = _nonneg_ext
    for name in BIND_NAMES:
        keys[f"bind.{name}"] = _nonneg_ext
    return keys


SCHEMA = {
    "general": {"geometry": str, "seed": int, "threads": _int_pos},
    "scaling": _scaling_keys(),
    "solver": {"tol": _positive, "method": _choice("auto", "direct", "cg", "minres"),
               "check_tol": _positive},
    "schedule": {"ratio": _positive, "first": _positive, "max_steps": _int_pos,
                 "decay": _positive, "stall": _positive, "substeps": _int_pos,
                 "scheme": _choice("crank-nicolson", "euler")},
    "output": {"dir": str, "prefix": str},
}

DEFAULTS = {
    "general": {"seed": 0, "threads": 1},
    "solver": {"tol": 1e-10, "method": "auto", "check_tol": 1e-8},
    "schedule": {"ratio": 1.25, "max_steps": 400, "decay": 1e-6, "stall": 1e-8, "substeps": 1,
                 "scheme": "crank-nicolson"},
    "output": {"dir": ".", "prefix": "porohomog"},
}


@dataclass
class RunConfig:
    general: dict = field(default_factory=dict)
    scaling: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def get(self, section: str, key: str, default=None):
        sec = getattr(self, section)
        if key in sec:
            return sec[key]
        return DEFAULTS.get(section, {}).get(key, default)

    @property
    def geometry(self) -> Path | None:
        g = self.general.get("geometry")
        if g is None:
            return None
        p = Path(g)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def seed(self) -> int:
        return self.get("general", "seed")

    @property
    def has_scaling(self) -> bool:
        return any(k.startswith(("alpha_", "limit.")) for k in self.scaling)

    def scaling_spec(self) -> sc.ScalingSpec:
        pairs = {}
        for name, attr in ALPHA_NAMES.items():
            c = self.scaling.get(f"alpha_{name}.c", 1.0)
            a = self.scaling.get(f"alpha_{name}.a", Fraction(0))
            pairs[attr] = sc.Power(c, a)
        return sc.ScalingSpec(rho_f=self.scaling.get("rho_f", 1.0),
                              rho_s=self.scaling.get("rho_s", 1.0), **pairs)

    def limits(self) -> sc.LimitSet:
        if any(k.startswith("limit.") for k in self.scaling):
            return sc.LimitSet.from_values(**{n: self.scaling[f"limit.{n}"] for n in LIMIT_NAMES})
        return sc.derive_limits(self.scaling_spec())

    @property
    def forcing_class(self) -> str:
        return self.scaling.get("forcing_class", "bounded_pressure")

    def bindings(self) -> dict:
        return {k[5:]: v for k, v in self.scaling.items() if k.startswith("bind.")}


def parse_config(text: str, base_dir=".") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), strict=True,
                                   default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string("[general]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from exc
    cfg = RunConfig(base_dir=Path(base_dir))
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        schema = SCHEMA[section]
        target = getattr(cfg, section)
        for key, raw in cp.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                target[key] = schema[key](raw.strip())
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from exc
    limits = [k for k in cfg.scaling if k.startswith("limit.")]
    alphas = [k for k in cfg.scaling if k.startswith("alpha_")]
    if limits and alphas:
        raise ConfigError("give either alpha_* exponents or limit.* values, not both")
    if limits and len(limits) != len(LIMIT_NAMES):
        missing = sorted(set(f"limit.{n}" for n in LIMIT_NAMES) - set(limits))
        raise ConfigError(f"limit.* values are incomplete, missing {', '.join(missing)}")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)
