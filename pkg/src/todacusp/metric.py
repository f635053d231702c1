"""Assembly of the circle-invariant Einstein metric

    h = xi^{-2} ( W dxi^2 + W^{-1} eta^2 + W e^v g_Sigma ),    g = xi^2 h,

from a potential v on the cylinder: the conformal factor W, the connection
1-form eta = dtheta + A (flux quantized by the bundle degree ell through the
period p of the circle fiber), and the 4x4 component grid used by the
curvature diagnostics.

Type I:   W = 1 - (1/2) xi v_xi
Type II:  W = (12 - 6 xi v_xi) / (12 + xi^3)

The curvature 2-form of eta is

    d eta = (W e^v)_xi dvol_Sigma + W_x dy ^ dxi + W_y dxi ^ dx

in a Euclidean coordinate x + iy on the torus; its closedness is equivalent
to the Toda equation and is checked here as an integrability diagnostic.
"""

from dataclasses import dataclass, field

import numpy as np

from .cross_section import FlatTorus, SyntheticSurface
from .solver import ScalarField, diff_matrices

METRIC_TYPES = ("TypeI", "TypeII")

# 4x4 component grids are indexed in the coordinate order (xi, s1, s2, theta);
# the self-dual/anti-self-dual labeling downstream assumes the orientation of
# the ordered coframe (dxi, eta, dx, dy).
COORD_ORDER = ("xi", "s1", "s2", "theta")


class FrameError(RuntimeError):
    """Invariant violation during frame construction (W <= 0, flux/degree
    mismatch, unconverged integrability)."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


def xi_derivative(values, xi, order=4):
    """d/dxi along axis 0 of a (n_xi, dof) array on (possibly nonuniform)
    nodes.  Edge rows take extra stencil points: the reconstructed W is
    differentiated again downstream, and narrow one-sided stencils would
    leave a rough O(h^order) layer that the second pass amplifies."""
    from .curvature import _axis_derivative_matrix
    D1 = _axis_derivative_matrix(np.asarray(xi, dtype=float), order)
    return D1 @ values


def compute_W(v, mtype, fd_order=4):
    """W from v per the metric type; v must carry its xi grid."""
    if mtype not in METRIC_TYPES:
        raise ValueError(f"unknown metric type {mtype!r}")
    if v.xi is None:
        raise ValueError("v has no xi grid; recover it through the variable map first")
    xi = np.asarray(v.xi, dtype=float)
    v_xi = xi_derivative(v.values, xi, order=fd_order)
    if mtype == "TypeI":
        W = 1.0 - 0.5 * xi[:, None] * v_xi
    else:
        denom = 12.0 + xi**3
        if np.any(np.abs(denom) < 1e-12):
            raise FrameError("xi grid touches the Type II pole xi^3 = -12")
        W = (12.0 - 6.0 * xi[:, None] * v_xi) / denom[:, None]
    return ScalarField(W, v.t if v.t is not None else xi, xi=xi)


def solve_connection(v, W, ell, cs, period=None, fd_order=4, dF_tol=None,
                     dF_window=(0.5, 0.95)):
    """Connection data (A, p) from the curvature 2-form of eta.

    Returns (conn, p, diag) where conn is a dict with the zero-mean Euclidean
    components 'A_x', 'A_y' of the periodic part of A (shape (n_xi, dof)),
    the monopole coefficient 'monopole' c with d(A_mono) = c dvol, and the
    gauge 'A_xi' (identically zero); diag carries the dF residual and the
    slice-flux spread.

    p = (1/ell) * integral of (We^v)_xi over Sigma for ell != 0; for ell = 0
    the flux must vanish and the period is a required input.
    """
    if not isinstance(cs, FlatTorus):
        raise ValueError("connection solve requires a flat torus cross-section")
    ell = int(ell)
    xi = np.asarray(v.xi, dtype=float)
    ev = np.exp(v.values)
    G = W.values * ev
    D1, D2 = diff_matrices(xi, fd_order)
    Gp = D1 @ G

    flux = np.array([cs.integrate(Gp[i]) for i in range(len(xi))])
    # boundary-layer FD truncation pollutes the first slices (see the dF
    # window below); the quantized flux is read off the interior
    wlo = max(fd_order + 1, int(dF_window[0] * len(xi)))
    whi = min(len(xi) - fd_order - 1, int(dF_window[1] * len(xi)))
    whi = max(whi, wlo + 1)
    c = float(flux[wlo:whi].mean())
    flux_spread = float(np.abs(flux[wlo:whi] - c).max())

    # d(dF) = [(We^v)_xixi + Delta W] dxi^dx^dy: zero iff the Toda equation
    # holds (the integrability check).  Near the Dirichlet slice the finite-
    # difference truncation of the reconstructed W dominates (the potential
    # varies fastest there), so the hard check is windowed to the interior;
    # the full profile is returned for inspection.
    dF = D2 @ G + cs.laplacian(W.values)
    dF_profile = np.abs(dF).max(axis=1)
    dF_res = float(dF_profile[wlo:whi].max())
    if dF_tol is not None and dF_res > dF_tol:
        raise FrameError(f"connection 2-form not closed: |dF| = {dF_res:.3e} > {dF_tol:.3e} "
                         "(unconverged potential?)")

    if ell != 0:
        p = c / ell
        if p <= 0:
            raise FrameError(f"flux {c:.3e} and degree {ell} give nonpositive period")
    else:
        if abs(c) > max(10 * flux_spread, 1e-8):
            raise FrameError(f"degree 0 requires zero flux, got {c:.3e}")
        if period is None or period <= 0:
            raise ValueError("degree 0 needs an explicit positive period")
        p = float(period)

    # periodic part: A = (-psi_y, psi_x) with Laplacian(psi) = meanzero flux
    # density; psi_xi = -W + const then reproduces the dxi components of dF
    wt = Gp - flux[:, None]  # area 1: slice integral == slice mean
    # remove the residual discrete mean exactly so roundoff on nearly
    # cohomogeneity-one data cannot trip the Poisson mass check
    wt = wt - np.array([cs.integrate(wt[i]) for i in range(len(xi))])[:, None]
    psi = -cs.solve_poisson_meanzero(wt)
    A_x = -cs.partial_euclidean(psi, 1)
    A_y = cs.partial_euclidean(psi, 0)
    conn = {"A_x": A_x, "A_y": A_y, "monopole": c, "A_xi": np.zeros_like(A_x)}
    diag = {"dF_residual": dF_res, "dF_profile": dF_profile,
            "flux_spread": flux_spread, "flux": flux}
    return conn, p, diag


@dataclass
class MetricFrame:
    """Assembled metric data on the cylinder chart (xi, Sigma, theta)."""

    mtype: str
    cs: object
    xi: np.ndarray
    t: np.ndarray
    W: np.ndarray               # (n_xi, dof)
    ev: np.ndarray              # e^v, (n_xi, dof)
    conn: dict = None           # connection data (torus frames)
    period: float = None
    ell: int = None
    min_W: float = None
    meta: dict = field(default_factory=dict)

    def component_grid(self, kahler=False):
        """Metric components (n_xi, n1, n2, 4, 4) in coordinates
        (xi, s1, s2, theta) (lattice coordinates on the torus); theta-
        independent by construction.  kahler=True returns g = xi^2 h."""
        if not isinstance(self.cs, FlatTorus):
            raise FrameError("component grids exist only for torus cross-sections")
        cs = self.cs
        n0 = len(self.xi)
        n1, n2 = cs.grid
        Bt = cs.basis.T
        Gram = cs.basis.T @ cs.basis

        W = cs._as_grid(self.W)            # (n0, n1, n2)
        ev = cs._as_grid(self.ev)
        # lattice components of A: periodic part (Euclidean -> lattice) plus
        # the monopole c * x dy in Euclidean coordinates
        AE = np.stack([cs._as_grid(self.conn["A_x"]), cs._as_grid(self.conn["A_y"])])
        c = self.conn["monopole"]
        x_eu = cs.basis[0, 0] * cs.x + cs.basis[0, 1] * cs.y   # Euclidean x(s)
        AE = AE.copy()
        AE[1] = AE[1] + c * x_eu[None, :, :]
        AL = np.einsum("ie,e...->i...", Bt, AE)                # A_{s_i}

        g4 = np.zeros((n0, n1, n2, 4, 4))
        xi2 = self.xi[:, None, None] ** 2
        Winv = 1.0 / W
        g4[..., 0, 0] = W
        g4[..., 3, 3] = Winv
        for i in range(2):
            g4[..., 3, 1 + i] = g4[..., 1 + i, 3] = Winv * AL[i]
            for j in range(2):
                g4[..., 1 + i, 1 + j] = Winv * AL[i] * AL[j] + W * ev * Gram[i, j]
        if not kahler:
            g4 /= xi2[..., None, None]
        return g4

    def profile_components(self):
        """The three cohomogeneity coefficients of h as fields over
        (xi, Sigma): (W, 1/W, W e^v), each scaled by xi^{-2}."""
        s = self.xi[:, None] ** -2.0
        return s * self.W, s / self.W, s * self.W * self.ev


def assemble(v, W, conn, period, cs, mtype, ell, meta=None):
    """Checked MetricFrame; fails (naming the first bad node) if W is not
    positive, and verifies flux quantization (1/p) * integral dEta == ell."""
    Wv = W.values
    if np.any(Wv <= 0):
        idx = np.unravel_index(int(np.argmin(Wv)), Wv.shape)
        if isinstance(cs, FlatTorus):
            node = (idx[0],) + np.unravel_index(idx[1], cs.grid)
        else:
            node = idx
        raise FrameError(f"W <= 0 at grid node {node}: W = {Wv[idx]:.6e}", node=node)
    frame = MetricFrame(mtype=mtype, cs=cs, xi=np.asarray(v.xi, dtype=float),
                        t=np.asarray(v.t, dtype=float), W=Wv, ev=np.exp(v.values),
                        conn=conn, period=float(period), ell=int(ell),
                        min_W=float(Wv.min()), meta=dict(meta or {}))
    frame.meta.setdefault("coords", COORD_ORDER)
    if conn is not None and ell != 0:
        degree = conn["monopole"] / period
        if abs(degree - ell) > 1e-8:
            raise FrameError(f"degree quantization violated: flux/period = {degree!r} "
                             f"vs ell = {ell}")
    return frame


def assemble_bvp_frame(spec, v, ell=None, period=None, pde_residual=None, fd_order=4):
    """End-to-end frame construction from a recovered potential v.

    ell=None picks the natural degree for the cusp: 0 for the flat-T^3 cusp
    of the base problem (requiring `period`, default 1), else the sign of
    the quantized flux.
    """
    mtype = "TypeI" if spec.id in ("BVP1", "BVP2") else "TypeII"
    W = compute_W(v, mtype, fd_order=fd_order)
    if ell is None:
        if spec.id == "BVP1":
            ell = 0
            period = 1.0 if period is None else period
        else:
            ell = 1 if spec.id in ("BVP2", "BVP3") else None
    if isinstance(spec.cs, FlatTorus):
        dF_tol = None if pde_residual is None else max(10 * pde_residual, 1e-6)
        conn, p, diag = solve_connection(v, W, ell, spec.cs, period=period,
                                         fd_order=fd_order, dF_tol=dF_tol)
    else:
        conn, diag = None, {}
        # degree-ell flux over the surface fixes the period as on the torus
        xi = np.asarray(v.xi, dtype=float)
        G = W.values * np.exp(v.values)
        Gp = xi_derivative(G, xi, order=fd_order)
        n = len(xi)
        flux = np.array([spec.cs.integrate(Gp[i]) for i in range(n)])
        c = float(flux[n // 2:max(n - fd_order - 1, n // 2 + 1)].mean())
        if ell is None:
            ell = 1 if c >= 0 else -1
        if ell == 0:
            if period is None or period <= 0:
                raise ValueError("degree 0 needs an explicit positive period")
            p = float(period)
        else:
            p = c / ell
            if p <= 0:
                raise FrameError(f"flux {c:.3e} and degree {ell} give nonpositive period")
    frame = assemble(v, W, conn, p, spec.cs, mtype, ell, meta={"bvp": spec.id})
    frame.meta.update(diag if isinstance(diag, dict) else {})
    frame.meta.pop("flux", None)
    frame.meta.pop("dF_profile", None)
    return frame


# ---------------------------------------------------------------------------
# cusp comparison

CUSP_MODELS = ("ah_cusp", "ach_cusp", "sigma_cusp")


def cusp_comparison(frame, model_profiles, r_of_xi=None):
    """Decay profile r -> sup_Sigma |h - h0|_{h0}(r) against an aligned model.

    model_profiles: callables (W0(xi), ev0(xi)) for the cohomogeneity model
    sharing the frame's chart.  The comparison is blockwise in the model's
    orthonormal coframe: the dxi^2, eta^2, and g_Sigma coefficient deviations
    plus (torus frames) the connection deviation measured against the model's
    fiber/base scales.  Returns (r, profile) with r the model arc length from
    the first grid node toward the cusp.
    """
    xi = frame.xi
    W0 = np.asarray(model_profiles[0](xi), dtype=float)
    ev0 = np.asarray(model_profiles[1](xi), dtype=float)
    if np.any(W0 <= 0) or np.any(ev0 <= 0):
        raise ValueError("model profiles must be positive on the frame's xi grid")

    cs = frame.cs
    rel_dxi = (frame.W - W0[:, None]) / W0[:, None]
    rel_eta = W0[:, None] / frame.W - 1.0
    rel_sig = frame.W * frame.ev / (W0 * ev0)[:, None] - 1.0
    pieces = [rel_dxi, rel_eta, rel_sig]
    if frame.conn is not None:
        # eta - eta0 = periodic A (the monopole parts agree when the model is
        # aligned); its h0-norm mixes the fiber and base scales:
        # |dtheta-cross term| = 2 |A|_{g_Sigma} / (W0 sqrt(e^{v0}))
        A2 = frame.conn["A_x"] ** 2 + frame.conn["A_y"] ** 2
        pieces.append(2.0 * np.sqrt(A2) / (W0 * np.sqrt(ev0))[:, None])
    prof = np.zeros(len(xi))
    for piece in pieces:
        sup = np.array([cs.sup(piece[i]) for i in range(len(xi))])
        prof = np.maximum(prof, sup)

    if r_of_xi is not None:
        r = np.asarray(r_of_xi(xi), dtype=float)
    else:
        # model arc length: dr = sqrt(W0)/|xi| |dxi|, accumulated from node 0
        # by the midpoint rule (the integrand is singular when the grid
        # touches the conformal boundary xi = 0)
        w_mid = 0.5 * (W0[1:] + W0[:-1])
        xi_mid = 0.5 * (xi[1:] + xi[:-1])
        r = np.concatenate([[0.0], np.cumsum(np.sqrt(w_mid) / np.abs(xi_mid)
                                             * np.abs(np.diff(xi)))])
    return r, prof
