"""Finite-difference curvature of theta-independent 4-metrics on a
(xi, s1, s2) grid: Christoffel symbols, Ricci, the Einstein residual
|Ric + 3h|_h, and the Weyl curvature split into self-dual and anti-self-dual
parts in an orthonormal frame.

The same engine evaluates solved frames, closed-form model metrics, and the
1D cohomogeneity-one metrics of the Dehn-filling construction (trivial axes
of length 1 differentiate to zero).  Stencils are centered in the interior
and biased near grid edges at the same formal order; consumers clip a margin
before taking sup-norms.

Conventions: coordinates ordered (x0, x1, x2, theta); curvature operator
matrix N_PQ = R(e_aP, e_bP, e_aQ, e_bQ) over the orthonormal 2-form pairs
P in [(01),(23),(02),(31),(03),(12)]; scalar s = 2 tr N; the self-dual block
is read off in the basis (e^{01}+-e^{23})/sqrt2 etc., with the sign of the
identification controlled by `orientation` (+1 matches the ordered coframe
(dxi, eta, dx, dy) on assembled frames).
"""

import numpy as np
import scipy.sparse as sp

from .solver import fd_weights

_PAIRS = ((0, 1), (2, 3), (0, 2), (3, 1), (0, 3), (1, 2))
# rows mapping the pair basis to (SD1..3, ASD1..3)
_SD_MIX = np.zeros((6, 6))
for _i in range(3):
    _SD_MIX[_i, 2 * _i] = _SD_MIX[_i, 2 * _i + 1] = 1 / np.sqrt(2)
    _SD_MIX[3 + _i, 2 * _i] = 1 / np.sqrt(2)
    _SD_MIX[3 + _i, 2 * _i + 1] = -1 / np.sqrt(2)


_EDGE_EXTRA = 4  # widen one-sided stencils: boundary-layer profiles lose a
                 # large error constant under bias, extra points win it back


def _axis_derivative_matrix(nodes, order, periodic=False):
    n = len(nodes)
    if n == 1:
        return sp.csr_matrix((1, 1))
    if n < order + 2:
        order = 2
    if n < 4:
        raise ValueError("axes need length 1 or >= 4 for differentiation")
    nodes = np.asarray(nodes, dtype=float)
    if not periodic:
        k = order // 2
        rows, cols, vals = [], [], []
        for i in range(n):
            if k <= i < n - k:
                sten = np.arange(i - k, i + k + 1)
            else:
                w = min(n, order + 1 + _EDGE_EXTRA)
                j0 = max(0, min(i - w // 2, n - w))
                sten = np.arange(j0, j0 + w)
            w1 = fd_weights(nodes[i], nodes[sten], 1)
            rows.extend([i] * len(sten))
            cols.extend(sten.tolist())
            vals.extend(w1.tolist())
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    # uniform periodic axis: wrap-around centered stencil (circulant)
    h = nodes[1] - nodes[0]
    if not np.allclose(np.diff(nodes), h):
        raise ValueError("periodic axes must be uniformly spaced")
    k = order // 2
    offs = np.arange(-k, k + 1)
    w = fd_weights(0.0, offs * h, 1)
    rows = np.repeat(np.arange(n), len(offs))
    cols = (np.arange(n)[:, None] + offs[None, :]) % n
    return sp.csr_matrix((np.tile(w, n), (rows, cols.ravel())), shape=(n, n))


def _apply_axis(D, arr, axis):
    if D.shape[0] == 1:
        return np.zeros_like(arr)
    moved = np.moveaxis(arr, axis, 0)
    out = (D @ moved.reshape(moved.shape[0], -1)).reshape(moved.shape)
    return np.moveaxis(out, 0, axis)


def _christoffel(g, dg):
    """Gamma^a_{bc} from g (..., 4, 4) and dg (..., b, d, c) = d_b g_{dc}."""
    ginv = np.linalg.inv(g)
    S = dg.transpose(*range(dg.ndim - 3), -2, -3, -1)        # (..., d, b, c)
    S = S + S.swapaxes(-1, -2) - dg
    return 0.5 * np.einsum("...ad,...dbc->...abc", ginv, S, optimize=True), ginv


def curvature_fields(g4, axes, fd_order=4, orientation=1, want_weyl=True,
                     chunk=24, conformal_xi=None,
                     periodic_axes=(False, False, False)):
    """Pointwise curvature diagnostics of a theta-independent metric.

    g4: components (n0, n1, n2, 4, 4); axes: the three 1D coordinate arrays
    (nonuniform allowed on axis 0).  Returns a dict of (n0, n1, n2) fields:
    einstein_residual, scalar, and (if want_weyl) weyl_plus, weyl_minus,
    rm_norm, reassembly_gap.

    conformal_xi: if given (per-node values of the coordinate phi = xi along
    axis 0, all nonzero), g4 is interpreted as the regular conformal metric
    g = phi^2 h and the Einstein residual |Ric_h + 3h|_h, scalar s_h, and
    h-normalized Weyl norms are produced through the exact conformal
    transformation

        Ric_h = Ric_g + 2 phi^{-1} Hess_g(phi)
                + (phi^{-1} Lap_g(phi) - 3 phi^{-2} |grad phi|_g^2) g.

    Differentiating the bounded g-components avoids the xi^{-2} blow-up of
    finite differences applied to h directly near the conformal boundary.
    """
    g4 = np.asarray(g4, dtype=float)
    n0, n1, n2 = g4.shape[:3]
    if periodic_axes[0]:
        raise ValueError("axis 0 (xi) cannot be periodic")
    D = [_axis_derivative_matrix(axes[k], fd_order, periodic=periodic_axes[k])
         for k in range(3)]
    halo = fd_order + 2

    out = {k: np.zeros((n0, n1, n2)) for k in ("einstein_residual", "scalar")}
    if want_weyl:
        for k in ("weyl_plus", "weyl_minus", "rm_norm", "reassembly_gap"):
            out[k] = np.zeros((n0, n1, n2))

    for c0 in range(0, n0, chunk):
        c1 = min(c0 + chunk, n0)
        lo1, hi1 = max(0, c0 - halo), min(n0, c1 + halo)
        lo2, hi2 = max(0, lo1 - halo), min(n0, hi1 + halo)

        g_s = g4[lo2:hi2]
        D0w = _axis_derivative_matrix(axes[0][lo2:hi2], fd_order) if hi2 - lo2 > 1 \
            else D[0]
        dg = np.empty((4,) + g_s.shape)
        dg[0] = _apply_axis(D0w, g_s, 0)
        dg[1] = _apply_axis(D[1], g_s, 1)
        dg[2] = _apply_axis(D[2], g_s, 2)
        dg[3] = 0.0
        dg = np.moveaxis(dg, 0, -3)                           # (..., b, d, c)

        Gam, ginv = _christoffel(g_s, dg)
        # restrict to the inner slab before the second derivative pass
        a, b = lo1 - lo2, hi1 - lo2
        Gam_s = Gam[a:b]
        D0i = _axis_derivative_matrix(axes[0][lo1:hi1], fd_order) if hi1 - lo1 > 1 \
            else D[0]
        dGam = np.empty((4,) + Gam_s.shape)
        dGam[0] = _apply_axis(D0i, Gam_s, 0)
        dGam[1] = _apply_axis(D[1], Gam_s, 1)
        dGam[2] = _apply_axis(D[2], Gam_s, 2)
        dGam[3] = 0.0
        dGam = np.moveaxis(dGam, 0, -4)                       # (..., c, a, d, b)

        # final restriction to the requested chunk
        s, e = c0 - lo1, c1 - lo1
        Gam_c = Gam_s[s:e]
        dGam_c = dGam[s:e]
        g_c = g_s[a:b][s:e]
        ginv_c = ginv[a:b][s:e]

        Riem = (dGam_c.transpose(*range(dGam_c.ndim - 4), -3, -1, -4, -2)
                - dGam_c.transpose(*range(dGam_c.ndim - 4), -3, -1, -2, -4))
        Riem = Riem + np.einsum("...ace,...edb->...abcd", Gam_c, Gam_c, optimize=True) \
                    - np.einsum("...ade,...ecb->...abcd", Gam_c, Gam_c, optimize=True)

        Ric = np.einsum("...abad->...bd", Riem)
        # scalar of the metric whose components were differentiated (in
        # conformal mode this is the regular conformal metric g = xi^2 h)
        scal = np.einsum("...bd,...bd->...", ginv_c, Ric)
        if conformal_xi is None:
            T = Ric + 3.0 * g_c
            w_scale = 1.0
        else:
            phi = np.asarray(conformal_xi, dtype=float)[c0:c1, None, None]
            Hess = -Gam_c[..., 0, :, :]                       # Hess_g(xi)_{ab}
            lap = np.einsum("...ab,...ab->...", ginv_c, Hess, optimize=True)
            grad2 = ginv_c[..., 0, 0]
            coef = lap / phi + (3.0 - 3.0 * grad2) / phi**2
            T = (Ric + (2.0 / phi)[..., None, None] * Hess
                 + coef[..., None, None] * g_c)               # Ric_h + 3 h
            w_scale = phi**2
        res = np.sqrt(np.abs(np.einsum("...ab,...cd,...ac,...bd->...",
                                       T, T, ginv_c, ginv_c, optimize=True)))
        if conformal_xi is not None:
            res = w_scale * res                               # |.|_h = phi^2 |.|_g
        out["einstein_residual"][c0:c1] = res
        out["scalar"][c0:c1] = scal

        if want_weyl:
            Rm = np.einsum("...ae,...ebcd->...abcd", g_c, Riem, optimize=True)
            L = np.linalg.cholesky(g_c)
            M = np.linalg.inv(L.swapaxes(-1, -2))             # frame vectors as columns
            Rm_onb = np.einsum("...mnrs,...ma,...nb,...rc,...sd->...abcd",
                               Rm, M, M, M, M, optimize=True)
            N = np.empty(g_c.shape[:-2] + (6, 6))
            for P, (pa, pb) in enumerate(_PAIRS):
                for Q, (qa, qb) in enumerate(_PAIRS):
                    N[..., P, Q] = Rm_onb[..., pa, pb, qa, qb]
            S = np.einsum("pi,...ij,qj->...pq", _SD_MIX, N, _SD_MIX, optimize=True)
            s_tr = 2.0 * np.einsum("...pp->...", N)
            eye3 = np.eye(3)
            Wp = S[..., :3, :3] - (s_tr / 12.0)[..., None, None] * eye3
            Wm = S[..., 3:, 3:] - (s_tr / 12.0)[..., None, None] * eye3
            if orientation < 0:
                Wp, Wm = Wm, Wp
            out["weyl_plus"][c0:c1] = w_scale * np.sqrt(
                np.einsum("...ij,...ij->...", Wp, Wp))
            out["weyl_minus"][c0:c1] = w_scale * np.sqrt(
                np.einsum("...ij,...ij->...", Wm, Wm))
            rm2 = np.einsum("...abcd,...abcd->...", Rm_onb, Rm_onb, optimize=True)
            out["rm_norm"][c0:c1] = np.sqrt(np.abs(rm2))
            # pair-bookkeeping oracle: 4 |S|_F^2 must reassemble |Rm|^2
            gap = np.abs(4.0 * np.einsum("...pq,...pq->...", S, S) - rm2)
            out["reassembly_gap"][c0:c1] = gap
    return out


def frame_curvature(frame, fd_order=6, orientation=1, chunk=16):
    """Curvature diagnostics of an assembled torus frame.

    Components are differentiated in the regular conformal gauge g = xi^2 h
    (bounded near the conformal boundary) with periodic stencils on the torus
    directions; outputs are normalized with respect to h.  Grid nodes with
    xi = 0 (the conformal boundary itself) are dropped; the returned dict
    carries the evaluated 'xi' nodes alongside the fields.
    """
    keep = np.abs(frame.xi) > 1e-12
    xi = frame.xi[keep]
    g4 = frame.component_grid(kahler=True)[keep]
    n1, n2 = frame.cs.grid
    axes = (xi, np.arange(n1) / n1, np.arange(n2) / n2)
    out = curvature_fields(g4, axes, fd_order=fd_order, orientation=orientation,
                           chunk=chunk, conformal_xi=xi,
                           periodic_axes=(False, True, True))
    out["xi"] = xi
    return out


def clip_mask(shape, margins):
    """Boolean mask keeping nodes at least margins[k] away from edge k (axes
    of length 1 are never clipped)."""
    mask = np.ones(shape, dtype=bool)
    for ax, m in enumerate(margins):
        if shape[ax] == 1 or m <= 0:
            continue
        sl = [slice(None)] * len(shape)
        sl[ax] = slice(0, m)
        mask[tuple(sl)] = False
        sl[ax] = slice(shape[ax] - m, shape[ax])
        mask[tuple(sl)] = False
    return mask


def clipped_sup(field, margins=(5, 2, 2)):
    mask = clip_mask(field.shape, margins)
    return float(np.abs(field[mask]).max())


# ---------------------------------------------------------------------------
# closed-form component builders (model metrics, black hole, cusp models)

def model_frame_components(fam, xi_nodes, n1=8, kahler=False):
    """Components of the cohomogeneity-one model metric of a Type I/II family
    on (xi, s1) with the monopole connection A = (a/2) s1 ds2 (unit-area
    square torus chart); s2 is a trivial axis.

    Returns (g4, axes) with g4 of shape (n0, n1, 1, 4, 4).
    """
    xi = np.asarray(xi_nodes, dtype=float)
    s1 = np.arange(n1) / n1 if n1 > 1 else np.array([0.0])
    ev = fam.ev(xi)
    wev = fam.wev(xi)
    if np.any(ev <= 0) or np.any(wev <= 0):
        raise ValueError("xi grid leaves the Riemannian interval")
    W = wev / ev
    A2 = 0.5 * fam.a * s1                                  # A_{s2}(s1)
    g4 = np.zeros((len(xi), len(s1), 1, 4, 4))
    Wc = W[:, None, None]
    evc = ev[:, None, None]
    Ac = A2[None, :, None]
    g4[..., 0, 0] = Wc
    g4[..., 3, 3] = 1.0 / Wc
    g4[..., 1, 1] = Wc * evc
    g4[..., 2, 2] = Ac**2 / Wc + Wc * evc
    g4[..., 2, 3] = g4[..., 3, 2] = Ac / Wc
    if not kahler:
        g4 /= (xi[:, None, None, None, None] ** 2)
    return g4, (xi, s1, np.array([0.0]))


def sigma_cusp_model_components(a, b, xi_nodes, y_nodes, kahler=False):
    """Type II model over a hyperbolic base in an upper-half-plane chart
    (x trivial): g_Sigma = (dx^2+dy^2)/y^2, connection A = (a/2) dx / y
    (so that d eta = (a/2) dvol_Sigma).

    Returns (g4, axes) with g4 of shape (n0, 1, n_y, 4, 4) in coordinates
    (xi, x, y, theta).
    """
    xi = np.asarray(xi_nodes, dtype=float)
    y = np.asarray(y_nodes, dtype=float)
    wev = b + 0.5 * a * xi
    Q = b + a * xi - (b / 6) * xi**3 - (a / 24) * xi**4 - xi**2
    if np.any(wev <= 0) or np.any(Q <= 0):
        raise ValueError("xi grid leaves the Riemannian interval")
    W = wev / Q
    g4 = np.zeros((len(xi), 1, len(y), 4, 4))
    Wc = W[:, None, None]
    yc = y[None, None, :]
    Ax = (0.5 * a) / yc
    wevc = wev[:, None, None]
    g4[..., 0, 0] = Wc
    g4[..., 3, 3] = 1.0 / Wc
    g4[..., 1, 1] = Ax**2 / Wc + wevc / yc**2    # W e^v = wev (e^v = Q, W = wev/Q)
    g4[..., 1, 3] = g4[..., 3, 1] = Ax / Wc
    g4[..., 2, 2] = wevc / yc**2
    if not kahler:
        g4 /= (xi[:, None, None, None, None] ** 2)
    return g4, (xi, np.array([0.0]), y)


def hyperbolic_cusp_components(r_nodes):
    """h0 = dr^2 + e^{-2r}(three flat circle directions): exact Einstein."""
    r = np.asarray(r_nodes, dtype=float)
    g4 = np.zeros((len(r), 1, 1, 4, 4))
    g4[..., 0, 0] = 1.0
    e = np.exp(-2 * r)[:, None, None]
    for i in (1, 2, 3):
        g4[..., i, i] = e
    return g4, (r, np.array([0.0]), np.array([0.0]))


def twisted_sigma_cusp_components(r_nodes, y_nodes):
    """The degree-ell Sigma_g cusp model
    (1/3)(dr^2 + e^{-2r}(dt + dx/y)^2 + (dx^2+dy^2)/y^2) in coordinates
    (r, x, y, t); asymptotically Einstein with Ric + 3h = O(e^{-2r})."""
    r = np.asarray(r_nodes, dtype=float)
    y = np.asarray(y_nodes, dtype=float)
    g4 = np.zeros((len(r), 1, len(y), 4, 4))
    e = np.exp(-2 * r)[:, None, None]
    yc = y[None, None, :]
    g4[..., 0, 0] = 1.0
    g4[..., 3, 3] = e
    g4[..., 1, 3] = g4[..., 3, 1] = e / yc
    g4[..., 1, 1] = e / yc**2 + 1.0 / yc**2
    g4[..., 2, 2] = 1.0 / yc**2
    g4 /= 3.0
    return g4, (r, np.array([0.0]), y)


def black_hole_components(a, s_nodes):
    """Toral black hole h = ds^2/V + V dtheta^2 + s^2(dx^2+dy^2),
    V = s^2 - a/s: exact Einstein with Ric = -3h for every a > 0."""
    s = np.asarray(s_nodes, dtype=float)
    V = s**2 - a / s
    if np.any(V <= 0):
        raise ValueError("s grid crosses the horizon s_+ = a^(1/3)")
    g4 = np.zeros((len(s), 1, 1, 4, 4))
    g4[..., 0, 0] = 1.0 / V[:, None, None]
    g4[..., 3, 3] = V[:, None, None]
    g4[..., 1, 1] = g4[..., 2, 2] = (s**2)[:, None, None]
    return g4, (s, np.array([0.0]), np.array([0.0]))
