"""Energy traces, stability ladders, degeneration family, pointed limits."""

import numpy as np
import pytest

from todacusp.cross_section import FlatTorus
from todacusp.diagnostics import (EnergyTrace, blow_up_comparison,
                                  degeneration_family, energy_trace,
                                  h_minus1_energy, pointed_limit_classifier,
                                  stability_experiment)
from todacusp.solver import BvpSpec, ScalarField, solve_bvp


@pytest.fixture(scope="module")
def torus():
    return FlatTorus(np.eye(2), grid=(16, 16))


# ---------------------------------------------------------------------------
# H^{-1} energy

def test_energy_zero(torus):
    assert h_minus1_energy(torus, np.zeros(torus.dof)) == 0.0


def test_energy_mode_oracle(torus):
    # -Delta phi = cos(2 pi x) has phi = cos(2 pi x)/(4 pi^2):
    # E = (1/2)(1/(4 pi^2)) * integral cos^2 = 1/(16 pi^2)
    E = h_minus1_energy(torus, np.cos(2 * np.pi * torus.x))
    assert abs(E - 1 / (16 * np.pi**2)) < 1e-14


def test_energy_orthogonal_modes_add(torus):
    w1 = np.cos(2 * np.pi * torus.x)
    w2 = 0.7 * np.sin(4 * np.pi * torus.y)
    E12 = h_minus1_energy(torus, w1 + w2)
    assert np.isclose(E12, h_minus1_energy(torus, w1) + h_minus1_energy(torus, w2),
                      rtol=1e-12)


def test_energy_matches_dirichlet_form(torus):
    w = np.cos(2 * np.pi * torus.x) + 0.3 * np.cos(4 * np.pi * (torus.x + torus.y))
    phi = torus.solve_poisson_meanzero(w)
    assert np.isclose(h_minus1_energy(torus, w), 0.5 * torus.grad_squared(phi),
                      rtol=1e-10)


def test_energy_rejects_nonzero_mean(torus):
    with pytest.raises(ValueError, match="mean"):
        h_minus1_energy(torus, 1.0 + np.cos(2 * np.pi * torus.x))


# ---------------------------------------------------------------------------
# energy traces

@pytest.fixture(scope="module")
def bvp1_pair(torus):
    phi = 0.3 * np.cos(2 * np.pi * torus.x)
    spec = BvpSpec("BVP1", torus, phi)
    u1, _, _ = solve_bvp(spec, T=6.0, n_t=120)
    u0, _, _ = solve_bvp(BvpSpec("BVP1", torus, 0.0 * phi), T=6.0, n_t=120)
    return spec, u1, u0


def test_trace_trivial_for_equal_fields(bvp1_pair):
    spec, u1, _ = bvp1_pair
    tr = energy_trace(spec, u1, u1)
    assert np.all(tr.E == 0.0)


def test_trace_decay_bound_and_monotone(bvp1_pair):
    spec, u1, u0 = bvp1_pair
    tr = energy_trace(spec, u1, u0)
    assert tr.E[0] > 0
    assert tr.monotone_ok()
    assert tr.inequality_ok()
    assert tr.decay_bound_ok()
    # closed-form root identity to machine precision
    assert abs(tr.kappa2**2 + tr.kappa1 * tr.kappa2 - tr.kappa0) < 1e-12 * tr.kappa0
    rows = tr.rows()
    assert len(rows) == len(u1.t) and len(rows[0]) == 5


def test_trace_kappa1_zero_degenerates_to_sqrt():
    t = np.linspace(0, 1, 11)
    E = np.exp(-2 * t)
    tr = EnergyTrace(t, E, np.gradient(E, t), np.zeros(11),
                     kappa0=4.0, kappa1=0.0, kappa2=2.0)
    assert tr.kappa2 == np.sqrt(tr.kappa0)


def test_trace_rejects_bad_kappa2():
    t = np.linspace(0, 1, 5)
    E = np.ones(5)
    with pytest.raises(ValueError, match="kappa2"):
        EnergyTrace(t, E, np.zeros(5), np.zeros(5),
                    kappa0=4.0, kappa1=0.0, kappa2=1.5)


def test_trace_rejects_negative_energy():
    t = np.linspace(0, 1, 5)
    with pytest.raises(ValueError, match="negative"):
        EnergyTrace(t, np.array([1.0, -0.5, 0, 0, 0]), np.zeros(5), np.zeros(5),
                    kappa0=4.0, kappa1=0.0, kappa2=2.0)


def test_trace_rejects_mismatched_grids(bvp1_pair, torus):
    spec, u1, _ = bvp1_pair
    other = ScalarField(u1.values[:-1], u1.t[:-1])
    with pytest.raises(ValueError, match="grid"):
        energy_trace(spec, u1, other)


def test_trace_rejects_mass_drift(bvp1_pair):
    spec, u1, _ = bvp1_pair
    drifted = ScalarField(u1.values + 0.01, u1.t, xi=u1.xi)
    with pytest.raises(ValueError, match="mass"):
        energy_trace(spec, u1, drifted)


# ---------------------------------------------------------------------------
# stability

def test_stability_identical_data_is_flat(torus):
    phi = 0.2 * np.cos(2 * np.pi * torus.x)
    spec = BvpSpec("BVP1", torus, phi)
    out = stability_experiment(spec, phi, phi, T=5.0, n_t=100)
    assert out["rows"][0]["sup_dev"] <= 1e-10
    assert out["power_bound_ok"]


def test_stability_ladder_linear_regime(torus):
    phi1 = np.zeros((16, 16))
    phi2 = np.cos(2 * np.pi * torus.x)
    spec = BvpSpec("BVP1", torus, phi1)
    out = stability_experiment(spec, phi1, phi2, T=6.0, n_t=120,
                               epsilons=(1e-1, 1e-2, 1e-3, 1e-4))
    # linearized response: amplitude exponent ~ 1, which complies with the
    # quarter-power upper bound
    assert abs(out["fitted_exponent"] - 1.0) < 0.05
    assert out["power_bound_ok"]
    # mode k = (1, 0) decays at rate 2 pi
    for row in out["rows"]:
        assert abs(row["delta"] - 2 * np.pi) < 0.02 * 2 * np.pi


def test_stability_bvp3_pair_decays(torus):
    phi1 = 0.2 * np.cos(2 * np.pi * torus.x)
    phi2 = 0.2 * np.cos(2 * np.pi * torus.y)
    spec = BvpSpec("BVP3", torus, phi1)
    out = stability_experiment(spec, phi1, phi2, T=6.0, n_t=200)
    row = out["rows"][0]
    assert row["sup_dev"] > 1e-4
    assert row["delta"] is not None and row["delta"] > 0
    D = out["profiles"][row["eps"]]
    assert D[len(D) // 2] < D[0]


def test_stability_needs_direction_for_ladder(torus):
    phi = 0.1 * np.cos(2 * np.pi * torus.x)
    spec = BvpSpec("BVP1", torus, phi)
    with pytest.raises(ValueError, match="distinct"):
        stability_experiment(spec, phi, phi, T=5.0, n_t=100, epsilons=(1e-2,))


# ---------------------------------------------------------------------------
# degeneration

@pytest.fixture(scope="module")
def degen(torus):
    phi0 = 0.3 * np.cos(2 * np.pi * torus.x)
    return degeneration_family(torus, phi0, [2, 4, 6, 8])


def test_degeneration_monotone_and_small(degen):
    errs = [r["sup_error"] for r in degen["rows"]]
    assert degen["monotone"]
    assert all(r["tag"] == "ok" for r in degen["rows"])
    assert errs[-1] < 0.05


def test_degeneration_affine_fit(degen):
    for r in degen["rows"]:
        assert r["a"] > 0 and r["b"] > 0
        assert abs(r["a"] - 1.0) < 1e-6          # unit slope pinned by the flux
        assert r["fit_residual"] < 1e-10


def test_degeneration_blow_up_components(degen):
    assert degen["blow_up"]["max_rel_dev"] < 1e-2


def test_blow_up_comparison_exact():
    out = blow_up_comparison(1.0, 1.0)
    assert out["max_rel_dev"] < 1e-12


def test_blow_up_comparison_rejects_bad_parameters():
    with pytest.raises(ValueError, match="a, b"):
        blow_up_comparison(-1.0, 1.0)


# ---------------------------------------------------------------------------
# pointed limits

@pytest.fixture(scope="module")
def degen_fields(torus):
    phi0 = 0.3 * np.cos(2 * np.pi * torus.x)
    Ns = [2, 4, 6, 8]
    vs = []
    for N in Ns:
        spec = BvpSpec("BVP2", torus, phi0 - N, a=1.0)
        b = float(np.mean(np.exp(torus.values(spec.phi))))
        T = float(np.sqrt(1 + 1.3 * 5.0 / b))
        _, v, _ = solve_bvp(spec, T, 240)
        vs.append(v)
    return Ns, vs


@pytest.mark.parametrize("rule,tag", [
    (lambda N: 1.0, "ch_cusp"),
    (lambda N: np.exp(-N), "blow_up"),
    (lambda N: np.exp(-2 * N), "RH4"),
    (lambda N: np.exp(-N / 2), "CH2"),
])
def test_pointed_limit_regimes(torus, degen_fields, rule, tag):
    Ns, vs = degen_fields
    res = pointed_limit_classifier(torus, vs, Ns, rule)
    assert res["tag"] == tag, res


def _profile_field(torus, xi, P):
    vals = np.log(P)[:, None] * np.ones((1, torus.dof))
    return ScalarField(vals, xi.copy(), xi=xi)


def test_pointed_limit_collapsed_line(torus):
    xi = np.linspace(40.0, 300.0, 120)
    v = _profile_field(torus, xi, 1.0 + xi)
    res = pointed_limit_classifier(torus, [v], [8.0], lambda N: 100.0)
    assert res["tag"] == "collapsed_line"


def test_pointed_limit_ambiguous_is_reported(torus):
    # a convex power profile fits neither constant nor linear clearly
    # better, and its affine fit needs a negative intercept
    xi = np.exp(np.linspace(-2.0, 2.0, 160))
    v = _profile_field(torus, xi, xi ** 3)
    res = pointed_limit_classifier(torus, [v], [8.0], lambda N: 1.0)
    assert res["tag"] == "ambiguous"
    assert set(res["candidates"]) <= {"RH4", "linear", "blow_up"}
