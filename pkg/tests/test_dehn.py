"""Black hole matching arithmetic, lattice identification, glued defect."""

import numpy as np
import pytest

from todacusp.cross_section import FlatTorus
from todacusp.dehn import (BlackHole, _unimodular_completion,
                           cutoff_derivative_bounds, defect_ladder,
                           glued_metric, hyperbolic_cusp_frame,
                           match_parameters, matching_lattice, smoothstep)
from todacusp.metric import assemble_bvp_frame
from todacusp.solver import BvpSpec, solve_bvp


# ---------------------------------------------------------------------------
# black hole family

@pytest.mark.parametrize("a", [0.1, 1.0, 1.3, 7.5])
def test_blackhole_horizon_identities(a):
    bh = BlackHole(a)
    d = bh.invariant_defects()
    assert max(d.values()) < 1e-12


def test_blackhole_rejects_bad_parameter():
    with pytest.raises(ValueError, match="positive"):
        BlackHole(-1.0)


def test_blackhole_rejects_subhorizon_radius():
    with pytest.raises(ValueError, match="horizon"):
        BlackHole(1.0).V(0.5)


@pytest.mark.parametrize("a", [0.2, 1.0, 5.0])
def test_blackhole_asymptotically_hyperbolic(a):
    out = BlackHole(a).asymptotic_deviation()
    assert out["within_bound"]
    # the deviation really is of size a/s^3, not accidentally zero
    assert out["deviation"].max() > 0.1 * (out["bound"] / 2).max()


# ---------------------------------------------------------------------------
# matching arithmetic

def test_match_parameters_defining_relation():
    for l, R in [(5.0, 1.0), (20.0, 3.0), (100.0, 2.0), (1e4, 5.0)]:
        a = match_parameters(l, R)
        assert 0 < a < np.exp(-3 * R)
        lhs = 16 * np.pi**2 * (1 - np.exp(3 * R) * a) / (9 * a ** (2 / 3)
                                                         * np.exp(2 * R))
        assert abs(lhs / l**2 - 1) < 1e-12
        bh = BlackHole(a)
        assert abs(bh.beta**2 * bh.V(np.exp(-R)) - l**2) < 1e-10 * l**2


def test_match_parameters_asymptotic_ladder():
    # s_+ e^R l -> 4 pi / 3 for large l
    R = 3.0
    vals = [match_parameters(l, R) ** (1 / 3) * np.exp(R) * l
            for l in (10.0, 40.0, 160.0, 640.0)]
    target = 4 * np.pi / 3
    errs = [abs(v - target) / target for v in vals]
    assert errs[-1] < 0.01
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))


def test_match_parameters_monotone_in_R():
    vals = [match_parameters(10.0, R) for R in (1.0, 1.5, 2.0, 2.5, 3.0)]
    assert all(a2 < a1 for a1, a2 in zip(vals, vals[1:]))


def test_match_parameters_rejects_bad_inputs():
    with pytest.raises(ValueError, match="l > 0"):
        match_parameters(-1.0, 2.0)
    with pytest.raises(ValueError, match="l > 0"):
        match_parameters(5.0, 0.0)


# ---------------------------------------------------------------------------
# cutoff and lattice

def test_smoothstep_profile():
    tau = np.linspace(-12, 12, 401)
    chi = smoothstep(tau)
    assert chi[0] == 1.0 and chi[-1] == 0.0
    assert np.all(np.diff(chi) <= 1e-15)
    assert np.all((chi >= 0) & (chi <= 1))
    b = cutoff_derivative_bounds()
    assert 0 < b["sup_d1"] < 1 and b["sup_d2"] > 0


@pytest.mark.parametrize("sigma", [(1, 0, 0), (0, 1, 0), (0, 0, -1),
                                   (2, 3, 1), (6, 10, 15), (-3, 5, 7)])
def test_unimodular_completion(sigma):
    U = _unimodular_completion(sigma)
    assert round(np.linalg.det(U)) in (-1, 1)
    assert np.array_equal(U[:, 0], np.asarray(sigma))


def test_unimodular_completion_rejects_imprimitive():
    with pytest.raises(ValueError, match="primitive"):
        _unimodular_completion((2, 4, 6))


def test_matching_lattice_isometry():
    rng = np.random.default_rng(7)
    basis = np.diag([0.05, 0.03, 0.04]) + 0.003 * rng.standard_normal((3, 3))
    for sigma in [(1, 0, 0), (0, 1, 0), (2, 3, 1)]:
        lat = matching_lattice(basis, sigma)
        C = lat["C"]
        # geodesic aligned with the circle direction, length preserved
        assert abs(C[1, 0]) < 1e-14 and abs(C[2, 0]) < 1e-14
        w = basis @ np.asarray(sigma)
        assert abs(lat["l"] - np.linalg.norm(w)) < 1e-12
        # the quotient torus is isometric to the slice torus: full Gram match
        U = _unimodular_completion(sigma)
        Bp = basis @ U
        assert lat["gram_defect"] < 1e-10
        assert np.abs(C.T @ C - Bp.T @ Bp).max() < 1e-10


# ---------------------------------------------------------------------------
# glued metric

@pytest.fixture(scope="module")
def cusp():
    return hyperbolic_cusp_frame(b=1.0, period=1.0)


def test_cusp_frame_is_the_type1_model(cusp):
    assert np.all(cusp.W == 1.0) and np.all(cusp.ev == 1.0)
    assert cusp.ell == 0 and cusp.min_W == 1.0


def test_glued_defect_supported_in_transition(cusp):
    g = glued_metric(cusp, R=3.0, l=100.0, halfwidth=1.5,
                     band_halfwidth=2.4, n_tau=241)
    prof = np.abs(g["defect"]).max(axis=(1, 2))
    dtau = g["tau"][1] - g["tau"][0]
    # exclude one stencil width past the transition: FD rows whose support
    # straddles the cutoff see the blend even where chi is exactly 0 or 1
    outside = np.abs(g["tau"]) > 1.5 + 11 * dtau
    outside[:8] = outside[-8:] = False          # FD edge rows
    # pure-cusp and pure-black-hole margins: both exact Einstein metrics
    assert prof[outside].max() < 1e-8
    assert g["sup_defect"] > 100 * prof[outside].max()
    assert g["sup_outside_transition"] < 1e-8
    # defect magnitude tracks the matching mismatch a e^{3R} ~ (4pi/3l)^3
    assert 0.1 * (4 * np.pi / (3 * 100.0)) ** 3 < g["sup_defect"] < 1e-2


def test_glued_defect_ladder_trend(cusp):
    # sup defect ~ l^{delta - 3}; with the documented delta in (0, 3/2) the
    # log-log slope must be <= delta - 3 + 0.3 (slope -3 is what the
    # mismatch scaling predicts)
    rows = defect_ladder(cusp, 3.0, [100.0, 200.0, 400.0, 800.0],
                         halfwidth=1.5, band_halfwidth=2.4, n_tau=241)
    d = np.array([r["sup_defect"] for r in rows])
    assert np.all(np.diff(d) < 0)
    slope = np.polyfit(np.log([r["l"] for r in rows]), np.log(d), 1)[0]
    assert slope <= 1.0 - 3.0 + 0.3


def test_glued_metric_horizon_guard(cusp):
    with pytest.raises(ValueError, match="horizon"):
        glued_metric(cusp, R=3.0, l=10.0, halfwidth=1.5, band_halfwidth=2.4)


def test_glued_metric_band_outside_grid():
    frame = hyperbolic_cusp_frame(xi_nodes=np.linspace(1.0, 30.0, 40))
    with pytest.raises(ValueError, match="band"):
        glued_metric(frame, R=3.0, l=100.0, halfwidth=1.5, band_halfwidth=2.4)


def test_glued_metric_from_solved_frame():
    torus = FlatTorus(np.eye(2), grid=(16, 16))
    phi = 0.3 * np.cos(2 * np.pi * torus.x)
    spec = BvpSpec("BVP1", torus, phi)
    _, v, rep = solve_bvp(spec, T=20.0, n_t=200)
    frame = assemble_bvp_frame(spec, v, pde_residual=rep.pde_residual_sup)
    g = glued_metric(frame, R=1.5, l=50.0, halfwidth=1.0, band_halfwidth=1.4,
                     n_tau=161, fd_order=4)
    # the solved frame carries its own small departure from the exact cusp,
    # so the defect is nonzero but stays at the matching scale
    assert 0 < g["sup_defect"] < 1e-2
    # cross-section-dependent frames only support the theta geodesic
    with pytest.raises(ValueError, match="theta"):
        glued_metric(frame, R=1.5, l=50.0, sigma=(0, 1, 0),
                     halfwidth=1.0, band_halfwidth=1.4, n_tau=161)


def test_glued_metric_rejects_twisted_frame(cusp):
    import copy
    tw = copy.deepcopy(cusp)
    tw.ell = 1
    with pytest.raises(ValueError, match="degree-0"):
        glued_metric(tw, R=3.0, l=100.0)
