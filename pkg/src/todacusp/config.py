"""Run configuration: flat ``key = value`` text with bracketed sections.

The format is deliberately minimal: no nesting, no interpolation, no
implicit defaults.  Unknown sections or keys are hard errors so a typo
cannot silently fall back to a default.  The raw file text is hashed
(SHA-256) and the hash is stamped into every output artifact, making
runs attributable to an exact configuration.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import re
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = "1.0"

COMMANDS = ("solve", "classify", "diagnose", "degenerate", "dehn", "plot-data")

#: every legal key, per section.  Validation is global (a known section with
#: an unknown key is an error no matter which command runs).
ALLOWED = {
    "run": {"command", "out", "strict", "threads"},
    "cross_section": {"type", "basis", "grid", "genus", "eigenvalues",
                      "oversample"},
    "bvp": {"id", "phi", "a"},
    "grid": {"T", "n_t", "fd_order", "tol_newton"},
    "classify": {"kind", "a", "b", "table", "a_lattice", "b_lattice"},
    "diagnose": {"phi2", "epsilons", "slack", "decay_window"},
    "degenerate": {"phi0", "N_list", "n_t", "window", "zeta_max", "T"},
    "dehn": {"R", "l_list", "b", "period", "sigma", "halfwidth",
             "band_halfwidth", "n_tau", "fd_order"},
    "plot_data": {"source"},
}

#: sections a command must provide (beyond [run], which is always required).
REQUIRED_SECTIONS = {
    "solve": ("cross_section", "bvp", "grid"),
    "classify": ("classify",),
    "diagnose": ("cross_section", "bvp", "grid", "diagnose"),
    "degenerate": ("cross_section", "degenerate"),
    "dehn": ("dehn",),
    "plot-data": ("plot_data",),
}


class ConfigError(ValueError):
    """Malformed, incomplete, or contradictory run configuration."""


def config_hash(text):
    """SHA-256 of the configuration text with normalized line endings."""
    canon = "\n".join(text.splitlines()) + "\n"
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class RunConfig:
    """Parsed and validated configuration plus its provenance hash."""

    command: str
    sections: dict
    text: str
    path: str = None
    sha256: str = field(init=False)

    def __post_init__(self):
        self.sha256 = config_hash(self.text)

    # -- typed accessors ----------------------------------------------------

    def has(self, section, key=None):
        if key is None:
            return section in self.sections
        return section in self.sections and key in self.sections[section]

    def get(self, section, key, default=None, required=False):
        if not self.has(section, key):
            if required:
                raise ConfigError(f"missing required key [{section}] {key}")
            return default
        return self.sections[section][key]

    def _conv(self, section, key, conv, default, required):
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(
                f"bad value for [{section}] {key}: {raw!r} ({exc})") from None

    def get_float(self, section, key, default=None, required=False):
        return self._conv(section, key, float, default, required)

    def get_int(self, section, key, default=None, required=False):
        return self._conv(section, key, lambda s: int(s, 0), default, required)

    def get_bool(self, section, key, default=None, required=False):
        def conv(s):
            s = s.strip().lower()
            if s in ("true", "yes", "on", "1"):
                return True
            if s in ("false", "no", "off", "0"):
                return False
            raise ValueError("expected a boolean")
        return self._conv(section, key, conv, default, required)

    def get_floats(self, section, key, default=None, required=False):
        return self._conv(
            section, key,
            lambda s: [float(tok) for tok in s.replace(",", " ").split()],
            default, required)

    def get_ints(self, section, key, default=None, required=False):
        return self._conv(
            section, key,
            lambda s: [int(tok) for tok in s.replace(",", " ").split()],
            default, required)


def parse_config(text, path=None):
    """Parse and validate configuration text into a RunConfig.

    The parse/serialize round trip is checked on every call: the canonical
    serialization must reparse to identical content.
    """
    cfg = _parse(text, path)
    canon = serialize_config(cfg)
    if serialize_config(_parse(canon, path)) != canon:
        raise ConfigError("configuration round trip is not lossless")
    return cfg


def _parse(text, path=None):
    cp = configparser.ConfigParser(
        interpolation=None, strict=True, delimiters=("=",),
        comment_prefixes=("#", ";"), default_section="\0never")
    cp.optionxform = str
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None

    sections = {}
    for sec in cp.sections():
        if sec not in ALLOWED:
            raise ConfigError(f"unknown section [{sec}]")
        bad = set(cp[sec]) - ALLOWED[sec]
        if bad:
            raise ConfigError(
                f"unknown key(s) in [{sec}]: {', '.join(sorted(bad))}")
        sections[sec] = dict(cp[sec])

    if "run" not in sections or "command" not in sections["run"]:
        raise ConfigError("configuration must declare [run] command")
    command = sections["run"]["command"]
    if command not in COMMANDS:
        raise ConfigError(
            f"unknown command {command!r}; expected one of {COMMANDS}")
    for sec in REQUIRED_SECTIONS[command]:
        if sec not in sections:
            raise ConfigError(f"command {command!r} requires section [{sec}]")

    return RunConfig(command, sections, text, path)


def serialize_config(cfg):
    """Canonical text form: the parsed key/value content, section order
    preserved.  parse(serialize(parse(text))) == parse(text)."""
    out = io.StringIO()
    for sec, kv in cfg.sections.items():
        out.write(f"[{sec}]\n")
        for k, v in kv.items():
            out.write(f"{k} = {v}\n")
        out.write("\n")
    return out.getvalue()


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), path=path)


# ---------------------------------------------------------------------------
# boundary-data expressions

_TERM = re.compile(
    r"""\s*(?P<sign>[+-]?)\s*
        (?:(?P<coef>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)\s*\*?\s*)?
        (?:(?P<fn>cos|sin)\s*\(\s*(?P<k1>-?\d+)\s*,\s*(?P<k2>-?\d+)\s*\))?
        \s*""", re.VERBOSE)


def phi_expression(expr, cs):
    """Evaluate a boundary-data expression on a cross-section.

    Torus syntax: a sum of terms ``c*cos(k1,k2)``, ``c*sin(k1,k2)``, and
    constants, where (k1, k2) are integer mode numbers in the lattice
    coordinates, e.g. ``0.5*cos(1,0) - 3``.  Synthetic-surface syntax:
    ``modes: c0 c1 c2 ...`` listing coefficients in the eigenbasis.
    ``csv:PATH`` loads a plain-text array of grid values instead.
    """
    from .cross_section import SyntheticSurface

    expr = expr.strip()
    if expr.startswith("csv:"):
        vals = np.loadtxt(expr[4:], delimiter=",", ndmin=1)
        return cs.flatten(vals)
    if expr.startswith("modes:"):
        if not isinstance(cs, SyntheticSurface):
            raise ConfigError("modes: data requires a synthetic surface")
        coef = np.array([float(tok) for tok in expr[6:].split()])
        if len(coef) > cs.dof:
            raise ConfigError(
                f"{len(coef)} mode coefficients but only {cs.dof} modes")
        out = np.zeros(cs.dof)
        out[:len(coef)] = coef
        return out
    if isinstance(cs, SyntheticSurface):
        raise ConfigError(
            "synthetic-surface boundary data must use modes: or csv:")

    out = np.zeros(cs.dof)
    pos = 0
    seen = False
    while pos < len(expr):
        m = _TERM.match(expr, pos)
        if not m or m.end() == pos or (m["coef"] is None and m["fn"] is None):
            raise ConfigError(
                f"cannot parse boundary expression at: {expr[pos:]!r}")
        sgn = -1.0 if m["sign"] == "-" else 1.0
        coef = sgn * (float(m["coef"]) if m["coef"] is not None else 1.0)
        if m["fn"] is None:
            out += coef                       # constant term
        else:
            k1, k2 = int(m["k1"]), int(m["k2"])
            phase = 2 * np.pi * (k1 * cs.x + k2 * cs.y)
            wave = np.cos(phase) if m["fn"] == "cos" else np.sin(phase)
            out += coef * cs.flatten(wave)
        pos = m.end()
        seen = True
    if not seen:
        raise ConfigError(f"empty boundary expression {expr!r}")
    return out


def build_cross_section(cfg):
    """Construct the cross-section declared in [cross_section]."""
    from .cross_section import FlatTorus, SyntheticSurface

    kind = cfg.get("cross_section", "type", "flat_torus")
    if kind == "flat_torus":
        basis = cfg.get_floats("cross_section", "basis", [1.0, 0.0, 0.0, 1.0])
        if len(basis) != 4:
            raise ConfigError("basis must list 4 numbers (row-major 2x2)")
        grid = cfg.get_ints("cross_section", "grid", [16, 16])
        if len(grid) != 2:
            raise ConfigError("grid must list 2 integers")
        return FlatTorus(np.array(basis).reshape(2, 2), grid=tuple(grid))
    if kind == "synthetic_surface":
        genus = cfg.get_int("cross_section", "genus", 2)
        eigs = cfg.get_floats("cross_section", "eigenvalues", required=True)
        overs = cfg.get_int("cross_section", "oversample", 8)
        return SyntheticSurface(genus, eigs, oversample=overs)
    raise ConfigError(f"unknown cross-section type {kind!r}")
