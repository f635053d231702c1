"""Closed-form xi-only solution families of the (twisted-)Toda equation and
their case tables: maximal Riemannian intervals, endpoint geometries, cone
angles, and the named roots of the profile polynomial.

Families (all with W e^v = b + (a/2) xi):
  TypeI        e^v = b + a xi                                 (torus base)
  TypeII_Torus e^v = P(xi) = b + a xi - (b/6) xi^3 - (a/24) xi^4
  TypeII_Sigma e^v = Q(xi) = P(xi) - xi^2, with b pinned so that Q has a
               double root at xi_* = -12^(1/3):  b + (a/2) xi_* = xi_*^2 / 3.
"""

import numpy as np
from scipy.optimize import brentq

XI_STAR = -(12.0 ** (1.0 / 3.0))

# endpoint geometry tags
PE = "PE"
AH_CUSP = "AH_cusp"
ACH_CUSP = "ACH_cusp"
ACH_EXPANDING = "ACH_expanding"
SIGMA_CUSP = "Sigma_cusp"
CONICAL = "Conical"
TWO_THIRDS_HORN = "TwoThirdsHorn"
FOUR_THIRDS_HORN = "FourThirdsHorn"

_REL_TOL_THRESHOLD = 1e-10
_ROOT_RTOL = 1e-12


class EndpointGeometry:
    """Endpoint tag; Conical additionally carries the cone angle per unit
    fiber period (multiply by the period p to get the actual angle)."""

    __slots__ = ("tag", "angle_per_period")

    def __init__(self, tag, angle_per_period=None):
        if tag == CONICAL:
            if angle_per_period is None or angle_per_period <= 0:
                raise ValueError("Conical endpoint requires a positive angle")
        elif angle_per_period is not None:
            raise ValueError("only Conical endpoints carry an angle")
        self.tag = tag
        self.angle_per_period = angle_per_period

    def __repr__(self):
        if self.tag == CONICAL:
            return f"Conical(angle/p={self.angle_per_period:.12g})"
        return self.tag

    def __eq__(self, other):
        if isinstance(other, str):
            return self.tag == other
        return self.tag == other.tag and self.angle_per_period == other.angle_per_period


def threshold_branch(a, b):
    """Sign of 2b^3 - 3a^3 with its own 'threshold' branch at relative
    tolerance 1e-10 (the endpoint geometry jumps there)."""
    lhs, rhs = 2 * b**3, 3 * a**3
    scale = max(abs(lhs), abs(rhs), 1e-300)
    if abs(lhs - rhs) <= _REL_TOL_THRESHOLD * scale:
        return "threshold"
    return "above" if lhs > rhs else "below"


class ModelFamily:
    """A xi-only solution, identified by (kind, a, b)."""

    KINDS = ("TypeI", "TypeII_Torus", "TypeII_Sigma")

    def __init__(self, kind, a, b=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown family kind {kind!r}")
        self.kind = kind
        self.a = float(a)
        self.xi_star = XI_STAR
        if kind == "TypeII_Sigma":
            if b is not None:
                raise ValueError("TypeII_Sigma derives b from a; do not pass b")
            self.b = XI_STAR**2 / 3 - (self.a / 2) * XI_STAR
        else:
            if b is None:
                raise ValueError(f"{kind} requires an explicit b")
            self.b = float(b)
        if self.a == 0.0 and self.b == 0.0:
            raise ValueError("a and b cannot both vanish")

    # -- profile ------------------------------------------------------------

    def ev(self, xi):
        """The profile e^v at xi."""
        xi = np.asarray(xi, dtype=float)
        a, b = self.a, self.b
        if self.kind == "TypeI":
            out = b + a * xi
        else:
            out = b + a * xi - (b / 6) * xi**3 - (a / 24) * xi**4
            if self.kind == "TypeII_Sigma":
                out = out - xi**2
        return out[()]

    def ev_prime(self, xi):
        xi = np.asarray(xi, dtype=float)
        a, b = self.a, self.b
        if self.kind == "TypeI":
            out = np.full_like(xi, a)
        else:
            out = a - (b / 2) * xi**2 - (a / 6) * xi**3
            if self.kind == "TypeII_Sigma":
                out = out - 2 * xi
        return out[()]

    def wev(self, xi):
        xi = np.asarray(xi, dtype=float)
        return (self.b + 0.5 * self.a * xi)[()]

    def profile(self, xi):
        """Return (e^v, W e^v, W) at xi; where e^v = 0, W is reported as a
        signed infinity (the caller sees the flag through isinf)."""
        ev = np.atleast_1d(np.asarray(self.ev(xi), dtype=float))
        wev = np.atleast_1d(np.asarray(self.wev(xi), dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            W = np.where(ev != 0.0, wev / np.where(ev != 0.0, ev, 1.0), np.sign(wev) * np.inf)
        if np.ndim(xi) == 0:
            return float(ev[0]), float(wev[0]), float(W[0])
        return ev, wev, W

    # -- roots --------------------------------------------------------------

    def _scan_roots(self):
        """All real roots of the profile polynomial by sign-change bracketing
        on a log-spaced scan, polished to relative accuracy 1e-12."""
        a, b = self.a, self.b
        if self.kind == "TypeI":
            return [] if a == 0 else [-b / a]
        # Cauchy-style bound on root magnitude
        if self.kind == "TypeII_Sigma":
            coeffs = [-a / 24, -b / 6, -1.0, a, b]
        else:
            coeffs = [-a / 24, -b / 6, 0.0, a, b]
        lead = coeffs[0] if coeffs[0] != 0 else coeffs[1]
        bound = 1.0 + max(abs(c / lead) for c in coeffs[1:])
        grid = np.concatenate([
            -np.logspace(np.log10(bound), -10, 400),
            [0.0],
            np.logspace(-10, np.log10(bound), 400),
        ])
        vals = np.atleast_1d(self.ev(grid))
        roots = []
        for i in range(len(grid) - 1):
            f0, f1 = vals[i], vals[i + 1]
            if f0 == 0.0:
                roots.append(grid[i])
            elif f0 * f1 < 0:
                roots.append(brentq(self.ev, grid[i], grid[i + 1],
                                    xtol=1e-300, rtol=max(_ROOT_RTOL, 4e-16)))
        if len(vals) and vals[-1] == 0.0:
            roots.append(grid[-1])
        # dedupe
        out = []
        for r in sorted(roots):
            if not out or abs(r - out[-1]) > 1e-9 * max(1.0, abs(r)):
                out.append(r)
        return out

    def roots(self):
        """The named roots of the convention list: xi_plus, xi_minus (where
        defined) and xi_bar = -2b/a (a != 0).  Absent roots are omitted."""
        a, b = self.a, self.b
        out = {}
        if a != 0.0:
            out["xi_bar"] = -2 * b / a
        if self.kind == "TypeI":
            return out
        rts = self._scan_roots()
        branch = threshold_branch(a, b)
        if a > 0:
            out["xi_plus"] = max(rts)
        elif a < 0 and b > 0:
            xi_bar = out["xi_bar"]
            cand = [r for r in rts if 0 < r < xi_bar]
            if cand:
                out["xi_plus"] = cand[0]
        elif a == 0 and b > 0:
            out["xi_plus"] = max(rts)
        if a > 0 and b > 0 and branch == "below":  # 3a^3 > 2b^3 > 0
            xi_bar = out["xi_bar"]
            cand = [r for r in rts if xi_bar < r < 0]
            if cand:
                out["xi_minus"] = cand[-1]
        if a < 0 and b < 0 and branch == "below":  # 2b^3 < 3a^3 < 0
            xi_bar = out["xi_bar"]
            cand = [r for r in rts if r < xi_bar]
            if cand:
                out["xi_minus"] = cand[0]
        return out

    # -- cone angle ---------------------------------------------------------

    def cone_angle(self, xi_hat, p_period):
        """Cone angle of the h-metric closing at a simple root xi_hat of the
        profile polynomial: p * |profile'(xi_hat)| / (2 W e^v(xi_hat)).
        Returns (angle, smooth) with smooth = (angle == 2 pi to 1e-8 rel)."""
        dp = float(np.atleast_1d(self.ev_prime(xi_hat))[0])
        wev = float(np.atleast_1d(self.wev(xi_hat))[0])
        scale = max(abs(self.a), abs(self.b), 1.0)
        if abs(dp) <= 1e-8 * scale:
            raise ValueError("cone angle undefined at a double root")
        if wev <= 0:
            raise ValueError("cone angle requires W e^v > 0 at the root")
        angle = p_period * abs(dp) / (2 * wev)
        smooth = abs(angle - 2 * np.pi) <= 1e-8 * 2 * np.pi
        return angle, smooth

    def _conical(self, xi_hat):
        return EndpointGeometry(CONICAL, self.cone_angle(xi_hat, 1.0)[0])

    # -- case tables --------------------------------------------------------

    def maximal_intervals(self):
        """The maximal Riemannian intervals (both positivity conditions hold)
        and their endpoint geometries, exactly per the case tables."""
        a, b = self.a, self.b
        if self.kind == "TypeII_Sigma":
            return [((XI_STAR, 0.0), (EndpointGeometry(SIGMA_CUSP), EndpointGeometry(PE)))]
        if a == 0.0 and b == 0.0:
            raise ValueError("a = b = 0 is not covered")
        if self.kind == "TypeI":
            return self._typeI_table()
        return self._typeII_table()

    def _typeI_table(self):
        a, b = self.a, self.b
        if a == 0 and b > 0:
            return [((0.0, np.inf), (EndpointGeometry(PE), EndpointGeometry(AH_CUSP)))]
        if a > 0 and b > 0:
            return [((0.0, np.inf), (EndpointGeometry(PE), EndpointGeometry(ACH_CUSP)))]
        if a < 0 and b > 0:
            return [((0.0, -b / a), (EndpointGeometry(PE), self._conical(-b / a)))]
        if a > 0 and b < 0:
            return [((-2 * b / a, np.inf), (EndpointGeometry(TWO_THIRDS_HORN), EndpointGeometry(ACH_CUSP)))]
        if b == 0 and a > 0:
            return [((0.0, np.inf), (EndpointGeometry(ACH_EXPANDING), EndpointGeometry(ACH_CUSP)))]
        raise ValueError(f"Type I parameters a={a}, b={b} not covered by the case table")

    def _typeII_table(self):
        a, b = self.a, self.b
        rts = self.roots()
        branch = threshold_branch(a, b)
        if a == 0 and b > 0:
            return [
                ((0.0, 6.0 ** (1.0 / 3.0)), (EndpointGeometry(PE), self._conical(6.0 ** (1.0 / 3.0)))),
                ((-np.inf, 0.0), (EndpointGeometry(FOUR_THIRDS_HORN), EndpointGeometry(PE))),
            ]
        if a > 0 and b > 0:
            pos = ((0.0, rts["xi_plus"]), (EndpointGeometry(PE), self._conical(rts["xi_plus"])))
            if branch == "below":  # 2b^3 < 3a^3: conical inner end
                neg = ((rts["xi_minus"], 0.0), (self._conical(rts["xi_minus"]), EndpointGeometry(PE)))
            elif branch == "threshold":
                neg = ((rts["xi_bar"], 0.0), (EndpointGeometry(ACH_CUSP), EndpointGeometry(PE)))
            else:  # 2b^3 > 3a^3
                neg = ((rts["xi_bar"], 0.0), (EndpointGeometry(TWO_THIRDS_HORN), EndpointGeometry(PE)))
            return [pos, neg]
        if a < 0 and b > 0:
            return [
                ((0.0, rts["xi_plus"]), (EndpointGeometry(PE), self._conical(rts["xi_plus"]))),
                ((-np.inf, 0.0), (EndpointGeometry(TWO_THIRDS_HORN), EndpointGeometry(PE))),
            ]
        if a > 0 and b < 0:
            return [((rts["xi_bar"], rts["xi_plus"]),
                     (EndpointGeometry(TWO_THIRDS_HORN), self._conical(rts["xi_plus"])))]
        if a < 0 and b < 0:
            if branch == "below":  # 2b^3 < 3a^3: conical right end
                return [((-np.inf, rts["xi_minus"]),
                         (EndpointGeometry(TWO_THIRDS_HORN), self._conical(rts["xi_minus"])))]
            tag = ACH_CUSP if branch == "threshold" else TWO_THIRDS_HORN
            return [((-np.inf, rts["xi_bar"]),
                     (EndpointGeometry(TWO_THIRDS_HORN), EndpointGeometry(tag)))]
        if b == 0 and a > 0:
            return [((0.0, 24.0 ** (1.0 / 3.0)),
                     (EndpointGeometry(ACH_EXPANDING), self._conical(24.0 ** (1.0 / 3.0))))]
        if b == 0 and a < 0:
            return [((-np.inf, 0.0), (EndpointGeometry(TWO_THIRDS_HORN), EndpointGeometry(ACH_EXPANDING)))]
        raise ValueError(f"Type II parameters a={a}, b={b} not covered by the case table")

    # -- diagnostics --------------------------------------------------------

    def ode_residual(self, xi):
        """Residual of the defining xi-only ODE at the sample points:
        (e^v)'' = 0 (Type I), (e^v)'' = -xi W e^v (Type II torus),
        (e^v)'' + 2 = -xi W e^v (Type II Sigma)."""
        xi = np.asarray(xi, dtype=float)
        a, b = self.a, self.b
        if self.kind == "TypeI":
            return np.zeros_like(xi)[()]
        d2 = -b * xi - (a / 2) * xi**2
        if self.kind == "TypeII_Sigma":
            d2 = d2 - 2.0
            return (d2 + 2.0 + xi * self.wev(xi))[()]
        return (d2 + xi * self.wev(xi))[()]


def horn_exponents(fam, interval, endpoint, n=400):
    """Numerically fit the exponents (p_eta, p_sigma) of the endpoint
    behavior h ~ dzeta^2 + c1 zeta^{p_eta} eta^2 + c2 zeta^{p_sigma} g_Sigma
    near a horn-type end (2/3-horn: (-2/3, 2/3); 4/3-horn: (-2/3, 4/3)).

    `endpoint` is "lo" or "hi" of the given interval; infinite ends are
    approached on a geometric ladder.
    """
    lo, hi = interval
    if endpoint == "lo":
        ref = hi if np.isfinite(hi) else (lo + 10 if np.isfinite(lo) else -1.0)
        target = lo
    else:
        ref = lo if np.isfinite(lo) else (hi - 10 if np.isfinite(hi) else 1.0)
        target = hi
    if np.isfinite(target):
        if np.isfinite(lo) and np.isfinite(hi):
            ref = 0.5 * (lo + hi)
        s = np.geomspace(1e-6, 0.2, n) * (ref - target)
        xi = target + s
    else:
        sign = np.sign(target)
        xi = sign * np.geomspace(max(10.0, 2 * abs(ref)), 1e5, n)
    ev, wev, W = fam.profile(xi)
    # arc length from the end: dzeta = sqrt(W)/|xi| dxi; at a horn end the
    # total arc length to the end is finite and zeta(end) = 0.
    integrand = np.sqrt(np.maximum(W, 0.0)) / np.abs(xi)
    S = np.abs(np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(xi))]))
    if np.isfinite(target):
        zeta = S  # first sample is nearest the end; omitted stub is negligible
    else:
        zeta = S[-1] - S  # arc length remaining toward the infinite end
    h_eta = 1.0 / (xi**2 * W)
    h_sigma = wev / xi**2
    sl = slice(n // 4, 3 * n // 4)
    p_eta = np.polyfit(np.log(zeta[sl]), np.log(h_eta[sl]), 1)[0]
    p_sigma = np.polyfit(np.log(zeta[sl]), np.log(h_sigma[sl]), 1)[0]
    return p_eta, p_sigma
