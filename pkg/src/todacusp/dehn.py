"""Toral black hole matching arithmetic and the glued approximate metric.

The filling replaces the deep end of a hyperbolic (AH) cusp
ds^2/s^2 + s^2 g_{T^3} with a quotient of the toral black hole
ds^2/V + V dtheta^2 + s^2 g_{R^2}, V(s) = s^2 - a/s, matched across the
slice s = e^{-R} along a chosen primitive geodesic of physical length l.
The defect of the glued metric is measured with the raw Einstein operator
Ric + 3h; the Bianchi gauge term of the full nonlinear setup is omitted
(it changes constants, not the decay trend that is checked here).  The
weighted spaces of the actual perturbation argument use decay exponents
delta in (0, 3/2) and tau in (3/2, 3); they appear only in this
documentation.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .cross_section import FlatTorus
from .curvature import curvature_fields
from .metric import MetricFrame

FOUR_PI_THIRDS = 4.0 * np.pi / 3.0


# ---------------------------------------------------------------------------
# the black hole family

@dataclass
class BlackHole:
    """Toral black hole with filling parameter a > 0: V(s) = s^2 - a/s on
    [s_plus, infinity), s_plus = a^{1/3}, theta-period beta = 4 pi/(3 s_plus)
    (the unique period closing the theta-circle smoothly at the horizon)."""

    a: float
    s_plus: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("filling parameter a must be positive")
        self.s_plus = self.a ** (1.0 / 3.0)
        self.beta = FOUR_PI_THIRDS / self.s_plus

    def V(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.s_plus * (1 - 1e-12)):
            raise ValueError("s below the horizon radius")
        return s**2 - self.a / s

    def Vp(self, s):
        s = np.asarray(s, dtype=float)
        return 2 * s + self.a / s**2

    def invariant_defects(self):
        """Roundoff-level residuals of the horizon identities
        V(s+) = 0, V'(s+) = 3 s+, beta V'(s+)/2 = 2 pi."""
        sp = self.s_plus
        return {
            "V_root": abs(sp**2 - self.a / sp),
            "Vp_slope": abs(self.Vp(sp) - 3 * sp),
            "cone_angle": abs(self.beta * self.Vp(sp) / 2 - 2 * np.pi),
        }

    def asymptotic_deviation(self, s_grid=None):
        """Componentwise deviation of h_BH from the hyperbolic product
        ds^2/s^2 + s^2(dtheta^2 + g_{R^2}), measured in the hyperbolic
        metric, sampled on [2 s+, 10 s+] by default; bounded by 2 a/s^3
        there."""
        if s_grid is None:
            s_grid = np.linspace(2 * self.s_plus, 10 * self.s_plus, 65)
        s = np.asarray(s_grid, dtype=float)
        V = self.V(s)
        dev = np.maximum(np.abs(s**2 / V - 1.0), np.abs(V / s**2 - 1.0))
        return {"s": s, "deviation": dev, "bound": 2 * self.a / s**3,
                "within_bound": bool(np.all(dev <= 2 * self.a / s**3))}


def match_parameters(l, R, rtol=1e-12):
    """Filling parameter a in (0, e^{-3R}) with beta^2 V(e^{-R}) = l^2,
    i.e. 16 pi^2 (1 - e^{3R} a) / (9 a^{2/3} e^{2R}) = l^2, to relative
    tolerance 1e-12, with the consistency recheck through the black hole's
    own V and beta."""
    l, R = float(l), float(R)
    if l <= 0 or R <= 0:
        raise ValueError("matching needs l > 0 and R > 0")

    def rel(a):
        return (16 * np.pi**2 * (1 - np.exp(3 * R) * a)
                / (9 * a ** (2.0 / 3.0) * np.exp(2 * R))) / l**2 - 1.0

    hi = np.exp(-3 * R)
    lo = hi * 1e-30
    if not (rel(lo) > 0 > rel(hi)):
        raise ValueError("no matching root in (0, e^{-3R})")
    a = brentq(rel, lo, hi, rtol=1e-15, xtol=1e-300)
    if abs(rel(a)) > rtol:
        raise ValueError(f"matching residual {abs(rel(a)):.3e} above tolerance")
    bh = BlackHole(a)
    recheck = abs(bh.beta**2 * bh.V(np.exp(-R)) / l**2 - 1.0)
    if recheck > 10 * rtol:
        raise ValueError(f"consistency recheck failed at {recheck:.3e}")
    return a


# ---------------------------------------------------------------------------
# cutoff and lattice matching

def smoothstep(tau, half=10.0):
    """C^3 polynomial cutoff: 1 for tau <= -half, 0 for tau >= half."""
    u = np.clip((half - np.asarray(tau, dtype=float)) / (2 * half), 0.0, 1.0)
    return u**4 * (35 - 84 * u + 70 * u**2 - 20 * u**3)


def cutoff_derivative_bounds(half=10.0, n=4001):
    """Recorded sup |chi'| and sup |chi''| of the cutoff profile (the glued
    defect constant depends on them)."""
    tau = np.linspace(-half, half, n)
    chi = smoothstep(tau, half)
    d1 = np.gradient(chi, tau)
    d2 = np.gradient(d1, tau)
    return {"sup_d1": float(np.abs(d1).max()), "sup_d2": float(np.abs(d2).max())}


def _unimodular_completion(sigma):
    """Integer 3x3 matrix with first column sigma and determinant +-1."""
    sigma = np.asarray(sigma, dtype=int)
    if sigma.shape != (3,) or not np.gcd.reduce(np.abs(sigma)) == 1:
        raise ValueError("sigma must be a primitive integer 3-vector")
    from math import gcd

    def bezout(p, q):
        x0, x1, y0, y1 = 1, 0, 0, 1
        while q:
            r = p // q
            p, q = q, p - r * q
            x0, x1 = x1, x0 - r * x1
            y0, y1 = y1, y0 - r * y1
        return p, x0, y0

    a, b, c = (int(v) for v in sigma)
    if (a, b) == (0, 0):
        # sigma = (0, 0, +-1): a permutation does it
        return np.array([[0, 1, 0], [0, 0, 1], [c, 0, 0]], dtype=int)
    # A sigma = e1 with det A = +-1, built from two gcd steps; then
    # U = A^{-1} (integer, via the adjugate) has first column sigma
    g1, x, y = bezout(a, b)
    M = np.array([[x, y, 0], [-b // g1, a // g1, 0], [0, 0, 1]], dtype=int)
    _, u, v = bezout(g1, c)              # u g1 + v c = 1 (sigma primitive)
    K = np.array([[u, 0, v], [0, 1, 0], [-c, 0, g1]], dtype=int)
    A = K @ M
    det = round(np.linalg.det(A))
    if det not in (-1, 1):
        raise ValueError("completion failed")
    U = np.round(np.linalg.inv(A) * 1.0).astype(int)
    if round(np.linalg.det(U)) not in (-1, 1) or not np.array_equal(U[:, 0], sigma):
        raise ValueError("completion failed")
    return U


def matching_lattice(basis, sigma):
    """Rotate the cusp slice lattice (columns of `basis`, physical lengths at
    the matching slice) into the black hole chart so that the primitive
    geodesic `sigma` (integer coordinates) aligns with the theta-circle.

    Returns the rotated basis C (first column (l, 0, 0) with l the physical
    geodesic length), the quotient lattice data, and the Gram congruence
    defect of the identification."""
    basis = np.asarray(basis, dtype=float)
    U = _unimodular_completion(sigma)
    Bp = basis @ U                      # first column = sigma's image
    Q, Rf = np.linalg.qr(Bp)
    # fix signs so the diagonal of Rf is positive
    sgn = np.sign(np.diag(Rf))
    sgn[sgn == 0] = 1.0
    C = (Q * sgn).T @ Bp
    l = float(C[0, 0])
    gram_defect = float(np.abs(C.T @ C - Bp.T @ Bp).max())
    return {"C": C, "l": l, "gram_defect": gram_defect,
            "theta_offsets": C[0, 1:].copy(), "plane_lattice": C[1:, 1:].copy()}


# ---------------------------------------------------------------------------
# cusp frames and the glued metric

def hyperbolic_cusp_frame(b=1.0, period=1.0, basis=None, xi_nodes=None,
                          grid=(4, 4)):
    """Exact hyperbolic-cusp frame (W = 1, e^v = b, flat connection): the
    Type I model with a = 0 on the given xi grid."""
    if xi_nodes is None:
        xi_nodes = np.exp(np.linspace(-14.0, 15.0, 291))
    xi = np.asarray(xi_nodes, dtype=float)
    cs = FlatTorus(np.eye(2) if basis is None else basis, grid=grid)
    n = len(xi)
    zeros = np.zeros((n, cs.dof))
    return MetricFrame(
        mtype="TypeI", cs=cs, xi=xi, t=xi, W=np.ones((n, cs.dof)),
        ev=b * np.ones((n, cs.dof)),
        conn={"A_x": zeros, "A_y": zeros.copy(), "monopole": 0.0,
              "flux": 0.0, "dF_sup": 0.0},
        period=float(period), ell=0, min_W=1.0,
        meta={"model": "hyperbolic_cusp", "b": float(b)})


def _band_profiles(frame, tau, R):
    """Cusp coefficients (W, e^v, Gram scale) on the band, interpolated from
    the frame's profiles at xi = e^{R - tau}."""
    xi_band = np.exp(R - tau)
    xi = frame.xi
    if xi_band.min() < xi.min() - 1e-12 or xi_band.max() > xi.max() + 1e-12:
        raise ValueError("transition band outside the cusp frame grid")
    order = np.argsort(xi)
    cs = frame.cs
    Wg = cs._as_grid(frame.W)[order]
    Eg = cs._as_grid(frame.ev)[order]
    sup_var = max(float(np.ptp(Wg, axis=(1, 2)).max()),
                  float(np.ptp(Eg, axis=(1, 2)).max()))

    from scipy.interpolate import CubicSpline

    def interp(F):
        # cubic, not linear: the curvature pass differentiates the band
        # profiles twice, and the kinks of a linear interpolant would
        # dominate the defect
        return CubicSpline(xi[order], F, axis=0)(np.clip(
            xi_band, xi.min(), xi.max()))

    return interp(Wg), interp(Eg), sup_var


def glued_metric(cusp_frame, R, l=None, sigma=(1, 0, 0), halfwidth=10.0,
                 band_halfwidth=None, n_tau=161, fd_order=6):
    """Assemble h_bar = (1 - chi) h + chi h_BH on the band
    s in (e^{-R-w}, e^{-R+w}), w = band_halfwidth (default halfwidth + 2),
    and measure its raw Einstein defect ||Ric + 3 h_bar||.  The cutoff chi
    is the polynomial profile with transition |log(s e^R)| < halfwidth, so
    the band's outer margins carry the unglued metrics (pure cusp above,
    pure black hole below).

    The band chart is (tau, y1, y2, y0) with s = e^{-R + tau}, y unit-period
    coordinates of the matched slice lattice, and y0 the filled geodesic
    direction.  If `l` is omitted it is taken from the physical length of
    `sigma` at the matching slice.  Frames whose profiles vary over the
    cross-section require sigma = (1, 0, 0) (no chart mixing)."""
    cs = cusp_frame.cs
    if cusp_frame.ell:
        raise ValueError("gluing requires an untwisted (degree-0) cusp end")
    if band_halfwidth is None:
        band_halfwidth = halfwidth + 2.0
    if band_halfwidth <= halfwidth:
        raise ValueError("band_halfwidth must exceed the cutoff halfwidth")
    tau = np.linspace(-band_halfwidth, band_halfwidth, n_tau)
    s = np.exp(-R + tau)
    W, Ev, sup_var = _band_profiles(cusp_frame, tau, R)
    n1, n2 = W.shape[1:]
    if sup_var > 1e-10 and tuple(sigma) != (1, 0, 0):
        raise ValueError("cross-section-dependent frames support only the "
                         "theta-direction geodesic sigma = (1, 0, 0)")

    # cusp slice lattice at s_bar = e^{-R}: theta-circle of length
    # s_bar * period, cross-section scaled by s_bar * sqrt(b)
    b = float(np.mean(Ev[len(tau) // 2]))
    sbar = np.exp(-R)
    basis3 = np.zeros((3, 3))
    basis3[0, 0] = sbar * cusp_frame.period
    basis3[1:, 1:] = sbar * np.sqrt(b) * cs.basis
    lat = matching_lattice(basis3, sigma)
    C = lat["C"]
    l_geo = lat["l"]
    if l is None:
        l = l_geo
    a = match_parameters(l, R)
    bh = BlackHole(a)
    if s.min() < 2 * bh.s_plus:
        raise ValueError(
            "transition band reaches the horizon: need e^{-R-halfwidth} "
            ">= 2 s_plus, i.e. l >= (8 pi / 3) e^{halfwidth}; "
            "increase l or narrow the cutoff")
    V = bh.V(s)
    chi = smoothstep(tau, halfwidth)

    # component order (tau, y1, y2, y0): lattice columns (sigma, k2, k3)
    # occupy slots (3, 1, 2)
    slot = {0: 3, 1: 1, 2: 2}
    e2R = np.exp(2 * R)
    g4 = np.zeros((n_tau, n1, n2, 4, 4))
    # tau-tau: cusp W, black hole s^2/V
    g4[..., 0, 0] = ((1 - chi) * W.T + chi * (s**2 / V)).T
    s2 = (s**2)[:, None, None]
    chic = chi[:, None, None]
    Uc = _unimodular_completion(sigma)
    # cusp block: lattice column j advances theta by period * Uc[0, j] and
    # the Sigma lattice coordinates by Uc[1:, j]
    Gram = cs.basis.T @ cs.basis
    for i in range(3):
        for j in range(3):
            si, sj = slot[i], slot[j]
            theta_part = (1.0 / W) * cusp_frame.period**2 * Uc[0, i] * Uc[0, j]
            sigma_part = W * Ev * (Uc[1:, i] @ Gram @ Uc[1:, j])
            cusp_block = (theta_part + sigma_part) / np.exp(2 * (R - tau))[:, None, None]
            bh_block = (V * (bh.beta / l) ** 2 * C[0, i] * C[0, j])[:, None, None] \
                + s2 * e2R * float(C[1:, i] @ C[1:, j])
            g4[..., si, sj] += (1 - chic) * cusp_block + chic * bh_block

    axes = (tau, np.arange(n1) / n1 if n1 > 1 else np.array([0.0]),
            np.arange(n2) / n2 if n2 > 1 else np.array([0.0]))
    out = curvature_fields(g4, axes, fd_order=fd_order, want_weyl=False,
                           periodic_axes=(False, n1 > 1, n2 > 1))
    res = out["einstein_residual"]
    margin = fd_order
    sup_defect = float(np.abs(res[margin:-margin]).max())
    # outside-the-transition mask, eroded by one stencil width so FD rows
    # whose support overlaps the transition are not counted as "outside"
    core = np.abs(chi - 0.5) < 0.5 - 1e-9          # transition region
    idx = np.flatnonzero(core)
    outside = np.ones(n_tau, dtype=bool)
    if idx.size:
        outside[max(idx.min() - fd_order - 4, 0):idx.max() + fd_order + 5] = False
    outside[:margin] = False
    outside[-margin:] = False
    return {
        "tau": tau, "chi": chi, "s": s, "a": a, "l": float(l),
        "l_geodesic": float(l_geo), "blackhole": bh,
        "lattice": lat, "defect": res, "sup_defect": sup_defect,
        "sup_outside_transition": float(np.abs(res[outside]).max())
        if outside.any() else 0.0,
        "cutoff_bounds": cutoff_derivative_bounds(halfwidth),
        "g4": g4, "axes": axes,
    }


def defect_ladder(cusp_frame, R, l_list, **kw):
    """Rows (R, l, a, s_plus, beta, sup_defect) over an l-ladder at fixed R."""
    rows = []
    for l in l_list:
        g = glued_metric(cusp_frame, R, l=l, **kw)
        bh = g["blackhole"]
        rows.append({"R": float(R), "l": float(l), "a": g["a"],
                     "s_plus": bh.s_plus, "beta": bh.beta,
                     "sup_defect": g["sup_defect"]})
    return rows
