"""Curvature engine: exact-Einstein oracles, conformal gauge, Weyl split."""

import numpy as np
import pytest

from todacusp.cross_section import FlatTorus
from todacusp.curvature import (_axis_derivative_matrix, black_hole_components,
                                clip_mask, clipped_sup, curvature_fields,
                                frame_curvature, hyperbolic_cusp_components,
                                model_frame_components,
                                sigma_cusp_model_components,
                                twisted_sigma_cusp_components)
from todacusp.metric import assemble_bvp_frame
from todacusp.models import XI_STAR, ModelFamily
from todacusp.solver import BvpSpec, solve_bvp


# ---------------------------------------------------------------------------
# differentiation building blocks

def test_periodic_stencil_differentiates_trig():
    errs = []
    for n in (32, 64):
        x = np.arange(n) / n
        D = _axis_derivative_matrix(x, 6, periodic=True)
        f = np.sin(2 * np.pi * x) + 0.3 * np.cos(4 * np.pi * x)
        fp = 2 * np.pi * np.cos(2 * np.pi * x) - 1.2 * np.pi * np.sin(4 * np.pi * x)
        errs.append(np.abs(D @ f - fp).max())
    assert errs[0] < 2e-4
    assert errs[0] / errs[1] > 50  # 6th order under refinement


def test_periodic_stencil_requires_uniform_nodes():
    x = np.array([0.0, 0.1, 0.3, 0.55, 0.8])
    with pytest.raises(ValueError, match="uniform"):
        _axis_derivative_matrix(x, 4, periodic=True)


def test_interval_stencil_polynomial_exact_to_edges():
    x = np.linspace(0, 1, 17) ** 1.2
    D = _axis_derivative_matrix(x, 4)
    f = x ** 4 - 2 * x ** 3
    assert np.abs(D @ f - (4 * x ** 3 - 6 * x ** 2)).max() < 1e-9


def test_trivial_axis_differentiates_to_zero():
    D = _axis_derivative_matrix(np.array([0.0]), 4)
    assert D.shape == (1, 1) and D.nnz == 0


# ---------------------------------------------------------------------------
# exact Einstein metrics (independent oracles for the engine)

def test_hyperbolic_cusp_einstein_and_fourth_order():
    sups = []
    for n in (81, 161, 321):
        g4, axes = hyperbolic_cusp_components(np.linspace(0, 4, n))
        out = curvature_fields(g4, axes, want_weyl=False)
        sups.append(clipped_sup(out["einstein_residual"], (5, 0, 0)))
    assert sups[-1] <= 1e-6
    orders = np.log2(np.array(sups[:-1]) / np.array(sups[1:]))
    assert np.all(orders > 3.5)


def test_black_hole_einstein_and_fourth_order():
    sups = []
    for n in (101, 201, 401):
        g4, axes = black_hole_components(1.3, np.linspace(1.5, 3.5, n))
        out = curvature_fields(g4, axes, want_weyl=False)
        sups.append(clipped_sup(out["einstein_residual"], (5, 0, 0)))
    assert sups[-1] <= 1e-6
    orders = np.log2(np.array(sups[:-1]) / np.array(sups[1:]))
    assert orders[-1] > 3.5 and orders.min() > 3.0


def test_black_hole_horizon_guard():
    with pytest.raises(ValueError, match="horizon"):
        black_hole_components(1.0, np.linspace(0.5, 3.0, 11))


def test_twisted_sigma_cusp_rate():
    # Ric + 3h = O(e^{-2r}): fit log residual ~ log C - rate * r
    r = np.linspace(1.0, 4.0, 181)
    y = np.linspace(1.0, 2.0, 96)
    g4, axes = twisted_sigma_cusp_components(r, y)
    out = curvature_fields(g4, axes, want_weyl=False)
    prof = out["einstein_residual"][:, 0, :].max(axis=1)
    keep = (r >= 1.3) & (r <= 3.5)  # above the FD noise floor of the base
    rate, logC = np.polyfit(r[keep], np.log(prof[keep]), 1)
    assert abs(-rate - 2.0) < 0.1


# ---------------------------------------------------------------------------
# model metrics through the conformal gauge

def test_type1_model_einstein_and_asd():
    fam = ModelFamily("TypeI", a=2.0, b=1.0)
    xi = np.linspace(0.05, 3.0, 240)
    g4, axes = model_frame_components(fam, xi, n1=8, kahler=True)
    out = curvature_fields(g4, axes, conformal_xi=xi)
    assert clipped_sup(out["einstein_residual"], (5, 0, 0)) < 1e-5
    # scalar-flat Kahler and anti-self-dual: W+ of h vanishes, s_g vanishes
    assert clipped_sup(out["weyl_plus"], (5, 0, 0)) < 1e-6
    assert clipped_sup(out["scalar"], (5, 0, 0)) < 1e-4
    assert clipped_sup(out["weyl_minus"], (5, 0, 0)) > 1e-2


def test_type2_model_weyl_relation_and_bridge():
    fam = ModelFamily("TypeII_Torus", a=1.0, b=1.0)
    (lo, hi), _ = fam.maximal_intervals()[0]
    xi = np.linspace(lo + 0.2, hi - 0.25, 200)
    g4, axes = model_frame_components(fam, xi, n1=12, kahler=True)
    out = curvature_fields(g4, axes, conformal_xi=xi)
    keep = slice(5, -5)
    assert np.abs(out["einstein_residual"][keep]).max() < 1e-4
    # |s_g| = (2 sqrt6 |W+|_h)^{1/3} with s_g = xi
    wp = out["weyl_plus"][:, 0, 0][keep]
    rel = np.abs((2 * np.sqrt(6) * wp) ** (1 / 3) - np.abs(xi[keep])) / np.abs(xi[keep])
    assert rel.max() < 1e-3
    sg = out["scalar"][:, 0, 0][keep]
    assert np.abs(sg - xi[keep]).max() < 1e-3


def test_sigma_chart_model_weyl_relation():
    # family over the hyperbolic base: double root of Q = P - xi^2 at xi_*
    a = 2.0
    b = XI_STAR ** 2 / 3 - 0.5 * a * XI_STAR
    xi = np.linspace(XI_STAR + 0.4, -0.3, 160)
    y = np.linspace(1.0, 2.0, 40)
    g4, axes = sigma_cusp_model_components(a, b, xi, y, kahler=True)
    out = curvature_fields(g4, axes, conformal_xi=xi)
    keep = clip_mask(out["einstein_residual"].shape, (5, 0, 4))
    assert np.abs(out["einstein_residual"][keep]).max() < 2e-4
    wp = np.where(keep, out["weyl_plus"], np.nan)[5:-5, :, 4:-4]
    rel = np.abs((2 * np.sqrt(6) * wp) ** (1 / 3)
                 - np.abs(xi[5:-5])[:, None, None]) / np.abs(xi[5:-5])[:, None, None]
    assert np.nanmax(rel) < 1e-3


def test_orientation_flag_swaps_weyl_blocks():
    fam = ModelFamily("TypeI", a=2.0, b=1.0)
    xi = np.linspace(0.3, 2.0, 60)
    g4, axes = model_frame_components(fam, xi, n1=8, kahler=True)
    out_p = curvature_fields(g4, axes, conformal_xi=xi, orientation=+1)
    out_m = curvature_fields(g4, axes, conformal_xi=xi, orientation=-1)
    assert np.allclose(out_p["weyl_plus"], out_m["weyl_minus"])
    assert np.allclose(out_p["weyl_minus"], out_m["weyl_plus"])


def test_reassembly_oracle():
    # the pair-basis bookkeeping must reassemble |Rm|^2 exactly
    fam = ModelFamily("TypeII_Torus", a=1.0, b=1.0)
    (lo, hi), _ = fam.maximal_intervals()[0]
    rels = []
    for n in (80, 160):
        xi = np.linspace(lo + 0.3, hi - 0.3, n)
        g4, axes = model_frame_components(fam, xi, n1=8, kahler=True)
        out = curvature_fields(g4, axes, conformal_xi=xi)
        rel = out["reassembly_gap"] / np.maximum(out["rm_norm"] ** 2, 1e-30)
        rels.append(rel[5:-5].max())
    # the gap is pure FD truncation (a pair-basis indexing bug would be O(1));
    # it must be small and vanish under refinement
    assert rels[0] < 1e-3
    assert rels[0] / rels[1] > 8


def test_conformal_and_direct_modes_agree():
    # away from the conformal boundary both evaluations measure the same h
    fam = ModelFamily("TypeI", a=1.0, b=1.0)
    xi = np.linspace(1.0, 3.0, 120)
    gk, axes = model_frame_components(fam, xi, n1=8, kahler=True)
    gh, _ = model_frame_components(fam, xi, n1=8, kahler=False)
    out_c = curvature_fields(gk, axes, conformal_xi=xi)
    out_d = curvature_fields(gh, axes)
    keep = clip_mask(out_c["einstein_residual"].shape, (8, 0, 0))
    assert np.abs(out_c["einstein_residual"][keep]).max() < 1e-6
    assert np.abs(out_d["einstein_residual"][keep]).max() < 1e-4
    dw = np.abs(out_c["weyl_minus"] - out_d["weyl_minus"])[keep]
    assert dw.max() < 1e-4


# ---------------------------------------------------------------------------
# assembled frames

@pytest.fixture(scope="module")
def bvp1_frame():
    ng = 16
    cs = FlatTorus(np.eye(2), grid=(ng, ng))
    s1 = (np.arange(ng) / ng)[:, None] * np.ones((1, ng))
    phi = 0.4 * np.cos(2 * np.pi * s1)
    spec = BvpSpec("BVP1", cs, phi)
    u, v, rep = solve_bvp(spec, T=6.0, n_t=120)
    return assemble_bvp_frame(spec, v, pde_residual=rep.pde_residual_sup)


def test_solved_frame_einstein_and_asd(bvp1_frame):
    out = frame_curvature(bvp1_frame, fd_order=6)
    prof = np.abs(out["einstein_residual"]).max(axis=(1, 2))
    # margin 5 on the full grid (xi = 0 dropped by frame_curvature)
    assert prof[4:-5].max() < 5e-3
    # tail of the cusp is deep in the Einstein regime
    assert prof[40:-5].max() < 1e-5
    wprof = np.abs(out["weyl_plus"]).max(axis=(1, 2))
    assert wprof[40:-5].max() < 1e-5


def test_gauge_invariance(bvp1_frame):
    # adding an exact form df to the connection is a theta-reparametrization:
    # curvature diagnostics are unchanged
    import copy
    shifted = copy.deepcopy(bvp1_frame)
    shifted.conn = dict(shifted.conn)
    shifted.conn["A_x"] = shifted.conn["A_x"] + 0.37   # df for f = 0.37 x
    out0 = frame_curvature(bvp1_frame, fd_order=4)
    out1 = frame_curvature(shifted, fd_order=4)
    for key in ("einstein_residual", "weyl_plus", "weyl_minus", "scalar"):
        # identical up to the FD truncation of the diagnostics themselves
        # (largest near the boundary layer, far below it in the interior)
        diff = np.abs(out0[key] - out1[key])
        assert diff[5:-5].max() < 2e-5
        assert diff[30:-30].max() < 1e-9


# ---------------------------------------------------------------------------
# clipping helpers

def test_clip_mask_margins():
    m = clip_mask((10, 1, 6), (2, 2, 1))
    assert m.shape == (10, 1, 6)
    assert not m[0, 0, 0] and not m[1, 0, 3] and not m[-2, 0, 3]
    assert m[2, 0, 1] and m[-3, 0, 4]
    assert m[:, 0, :].sum() == 6 * 4  # length-1 axis untouched
    assert not m[5, 0, 0] and not m[5, 0, -1]


def test_clipped_sup_matches_mask():
    f = np.zeros((12, 4, 4))
    f[0] = 100.0    # clipped away
    f[6, 2, 2] = 3.0
    assert clipped_sup(f, (5, 1, 1)) == 3.0
