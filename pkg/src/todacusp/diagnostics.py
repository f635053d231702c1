"""Slice-wise H^{-1} energy traces, stability ladders, and the cusp
degeneration experiments (complex-hyperbolic limit, blow-up profile,
pointed-limit classification)."""

from dataclasses import dataclass, field

import numpy as np

from .cross_section import SyntheticSurface
from .models import ModelFamily
from .solver import BvpSpec, ScalarField, SolverError, adapt_to_canonical, \
    fit_decay, solve_bvp

DEFAULT_MASS_TOL = 1e-6


# ---------------------------------------------------------------------------
# H^{-1} energy

def h_minus1_energy(cs, w):
    """E = (1/2) ||w||_{H^{-1}}^2 = (1/2) * integral of w * phi, where
    -Delta phi = w with mean-zero phi.  w must have zero mean."""
    w = np.asarray(w, dtype=float)
    mass = np.abs(np.atleast_1d(cs.integrate(w))).max()
    if mass > max(cs.mass_tolerance(w), 1e-300):
        raise ValueError(f"energy source has nonzero mean {mass:.3e}")
    phi = cs.solve_poisson_meanzero(w)
    prod = cs.project(cs.values(w) * cs.values(phi))
    return 0.5 * np.asarray(cs.integrate(prod))[()]


def _remove_slice_means(cs, w):
    """Subtract the exact slice mean (guards the Poisson mass check against
    pure roundoff when the analytic mean vanishes)."""
    m = np.atleast_1d(cs.mean(w))
    out = np.array(w, dtype=float)
    if isinstance(cs, SyntheticSurface):
        out[..., 0] -= m.reshape(out.shape[:-1])
    else:
        out -= m.reshape(out.shape[:-1] + (1,))
    return out


@dataclass
class EnergyTrace:
    """H^{-1} energy of a solution difference along the cylinder, with the
    constants of the differential inequality E'' >= k0 E - k1 |E'|."""

    t: np.ndarray
    E: np.ndarray
    dE: np.ndarray
    d2E: np.ndarray
    kappa0: float
    kappa1: float
    kappa2: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        scale = max(float(np.max(self.E, initial=0.0)), 1e-300)
        if np.min(self.E) < -1e-12 * scale:
            raise ValueError("negative energy value in trace")
        self.E = np.maximum(self.E, 0.0)
        k2 = 0.5 * (np.sqrt(self.kappa1**2 + 4 * self.kappa0) - self.kappa1)
        if not np.isclose(k2, self.kappa2, rtol=1e-12, atol=1e-300):
            raise ValueError("kappa2 inconsistent with kappa0, kappa1")

    @property
    def slack(self):
        """FD slack for the discrete second-derivative checks."""
        dt = float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0
        return 10.0 * dt**2 * float(np.max(np.abs(self.E), initial=0.0))

    def inequality_residual(self):
        """k0 E - k1 |E'| - E'' at interior nodes (positive = violation)."""
        sl = slice(1, -1)
        return (self.kappa0 * self.E[sl] - self.kappa1 * np.abs(self.dE[sl])
                - self.d2E[sl])

    def inequality_ok(self):
        if len(self.t) < 3:
            return True
        return bool(np.max(self.inequality_residual()) <= self.slack)

    def decay_bound(self):
        """The exponential envelope E(t0) * exp(-kappa2 (t - t0))."""
        return self.E[0] * np.exp(-self.kappa2 * (self.t - self.t[0]))

    def decay_bound_ok(self):
        return bool(np.max(self.E - self.decay_bound()) <= self.slack)

    def monotone_ok(self):
        return bool(np.max(np.diff(self.E)) <= self.slack)

    def rows(self):
        """(t, E, E', E'', bound) rows for tabular output."""
        b = self.decay_bound()
        return [(float(self.t[i]), float(self.E[i]), float(self.dE[i]),
                 float(self.d2E[i]), float(b[i])) for i in range(len(self.t))]


def _centered_derivatives(E, dt):
    n = len(E)
    dE = np.zeros(n)
    d2E = np.zeros(n)
    if n >= 3:
        dE[1:-1] = (E[2:] - E[:-2]) / (2 * dt)
        d2E[1:-1] = (E[2:] - 2 * E[1:-1] + E[:-2]) / dt**2
        # second-order one-sided ends
        dE[0] = (-3 * E[0] + 4 * E[1] - E[2]) / (2 * dt)
        dE[-1] = (3 * E[-1] - 4 * E[-2] + E[-3]) / (2 * dt)
        if n >= 4:
            d2E[0] = (2 * E[0] - 5 * E[1] + 4 * E[2] - E[3]) / dt**2
            d2E[-1] = (2 * E[-1] - 5 * E[-2] + 4 * E[-3] - E[-4]) / dt**2
    return dE, d2E


def energy_trace(spec, u1, u2, mass_tol=DEFAULT_MASS_TOL):
    """EnergyTrace of w = e^{u1} - e^{u2} for two canonical solutions of the
    same boundary value problem on the same grid.

    The constants come from the coefficient profile: with A' the larger sup
    norm of the two solutions,
        kappa0 = (e^{-A'} / sup Psi) * 2 lambda_1,
        kappa1 = sup|B| / inf Psi,
        kappa2 = (sqrt(kappa1^2 + 4 kappa0) - kappa1) / 2.
    """
    cs = spec.cs
    if u1.values.shape != u2.values.shape or not np.allclose(u1.t, u2.t):
        raise ValueError("fields must share one grid")
    profile, _, _ = adapt_to_canonical(spec)
    e1 = cs.project(np.exp(cs.values(u1.values)))
    e2 = cs.project(np.exp(cs.values(u2.values)))
    for e in (e1, e2):
        drift = np.max(np.abs(np.atleast_1d(cs.mean(e)) - 1.0))
        if drift > mass_tol:
            raise ValueError(f"slice mass drift {drift:.3e} exceeds tolerance")
    w = _remove_slice_means(cs, e1 - e2)
    phi = cs.solve_poisson_meanzero(w)
    prod = cs.project(cs.values(w) * cs.values(phi))
    E = 0.5 * np.atleast_1d(cs.integrate(prod))

    Psi, B, _ = profile.sample(u1.t)
    A_prime = max(cs.sup(u1.values), cs.sup(u2.values))
    kappa0 = np.exp(-A_prime) / float(np.max(Psi)) * 2.0 * cs.lambda1
    kappa1 = float(np.max(np.abs(B))) / float(np.min(Psi))
    kappa2 = 0.5 * (np.sqrt(kappa1**2 + 4 * kappa0) - kappa1)

    dt = float(u1.t[1] - u1.t[0])
    dE, d2E = _centered_derivatives(E, dt)
    return EnergyTrace(np.asarray(u1.t, dtype=float), E, dE, d2E,
                       kappa0, kappa1, kappa2,
                       meta={"A_prime": A_prime, "profile": profile.name})


# ---------------------------------------------------------------------------
# stability ladder

QUARTER_POWER = 0.25


def stability_experiment(spec, phi1, phi2, T, n_t, epsilons=None,
                         fd_order=4, exponent=QUARTER_POWER, slack=0.1,
                         tol_newton=None, decay_window=(0.05, 0.7)):
    """Sup-difference profiles D(t) = sup |u1 - u2| for perturbed boundary
    data, with the power-law compliance check on the perturbation amplitude.

    With `epsilons` a descending ladder, data phi1 and phi1 + eps * psi are
    solved for each rung (psi the sup-normalized direction phi2 - phi1) and
    the envelope D_sup(eps) <= C * eps^exponent is checked with C calibrated
    at the largest rung.  The bound is an upper bound, so faster-than-power
    decay (e.g. the linear regime, fitted exponent near 1) is compliant; only
    sup-differences shrinking slower than the power as eps decreases fail.
    """
    cs = spec.cs
    phi1 = cs.flatten(np.asarray(phi1, dtype=float))
    phi2 = cs.flatten(np.asarray(phi2, dtype=float))
    kw = {"fd_order": fd_order}
    if tol_newton is not None:
        kw["tol_newton"] = tol_newton

    def run(phi):
        u, _, rep = solve_bvp(BvpSpec(spec.id, cs, phi, a=spec.a), T, n_t, **kw)
        return u, rep

    u_base, _ = run(phi1)
    direction = phi2 - phi1
    dir_sup = cs.sup(direction)
    if epsilons is None:
        ladder = [None]
    else:
        if dir_sup == 0.0:
            raise ValueError("epsilon ladder needs distinct phi1, phi2")
        ladder = sorted(epsilons, reverse=True)

    rows = []
    profiles = {}
    for eps in ladder:
        if eps is None:
            phi = phi2
            eps_eff = dir_sup
        else:
            phi = phi1 + eps * direction / dir_sup
            eps_eff = eps
        u_eps, _ = run(phi)
        diff = u_eps.values - u_base.values
        D = np.array([cs.sup(diff[i]) for i in range(len(u_base.t))])
        delta, fit = fit_decay(
            ScalarField(diff, np.asarray(u_base.t), xi=u_base.xi),
            "exp_t", cs=cs, window=decay_window)
        rows.append({"eps": float(eps_eff), "sup_dev": float(D.max()),
                     "delta": delta, "fit": fit})
        profiles[float(eps_eff)] = D

    sup_devs = np.array([r["sup_dev"] for r in rows])
    eps_arr = np.array([r["eps"] for r in rows])
    out = {"t": np.asarray(u_base.t, dtype=float), "rows": rows,
           "profiles": profiles, "exponent_bound": exponent}
    if len(rows) >= 2 and np.all(sup_devs > 0):
        q = np.polyfit(np.log(eps_arr), np.log(sup_devs), 1)[0]
        C = sup_devs[0] / eps_arr[0] ** exponent
        ok = bool(np.all(sup_devs <= (1 + slack) * C * eps_arr ** exponent))
        out.update(fitted_exponent=float(q), envelope_constant=float(C),
                   power_bound_ok=ok)
    else:
        out.update(fitted_exponent=None, envelope_constant=None,
                   power_bound_ok=bool(np.all(sup_devs <= 1e-10)))
    return out


# ---------------------------------------------------------------------------
# degeneration family (log-growth problem, boundary data -N + phi0)

def _window_error(cs, v, window):
    keep = np.flatnonzero((v.xi >= window[0]) & (v.xi <= window[1]))
    if keep.size < 3:
        raise ValueError("grid does not resolve the comparison window")
    dev = v.values[keep] - np.log(v.xi[keep])[:, None]
    return float(max(cs.sup(dev[i]) for i in range(keep.size)))


def degeneration_family(cs, phi0, N_list, n_t=240, window=(1.0, 5.0),
                        zeta_max=4.0, fd_order=4, T=None):
    """Solve the log-growth problem with boundary data -N + phi0 along an
    N-ladder and measure the collapse toward the complex hyperbolic cusp.

    Per rung the report records sup over [window] x Sigma of |v_N - log xi|,
    the best-fit coefficients of log(b + a zeta) for the rescaled slice-mean
    profile on zeta = xi e^N <= zeta_max, and the residual Sigma-oscillation
    on that rescaled window.  (The cross-section stays fixed, so the
    coordinate dilation of Sigma in the rescaled limit is reflected only in
    the zeta-profile; the oscillation column tracks the part the fixed chart
    cannot rescale away.)  Solver failures terminate the ladder and are
    tagged with the achieved range.
    """
    phi0 = cs.flatten(np.asarray(phi0, dtype=float))
    rows = []
    last = None
    for N in N_list:
        spec = BvpSpec("BVP2", cs, phi0 - float(N), a=1.0)
        b = float(np.mean(np.exp(cs.values(spec.phi))))
        T_N = T if T is not None else float(np.sqrt(1.0 + 1.3 * window[1] / b))
        try:
            u, v, rep = solve_bvp(spec, T_N, n_t, fd_order=fd_order)
        except SolverError as err:
            rows.append({"N": float(N), "window": tuple(window),
                         "sup_error": np.nan, "a": np.nan, "b": np.nan,
                         "fit_residual": np.nan, "oscillation": np.nan,
                         "tag": f"solver_failure:{err.stage}"})
            break
        err_win = _window_error(cs, v, window)

        # rescaled profile: e^{v_N + N} against b + a * zeta, zeta = xi e^N
        zeta = v.xi * np.exp(float(N))
        keep = np.flatnonzero(zeta <= zeta_max)
        ebar = np.exp(float(N)) * np.array(
            [np.mean(np.exp(cs.values(v.values[i]))) for i in keep])
        A = np.vstack([np.ones(keep.size), zeta[keep]]).T
        (b_fit, a_fit), *_ = np.linalg.lstsq(A, ebar, rcond=None)
        resid = float(np.abs(A @ [b_fit, a_fit] - ebar).max()
                      / max(ebar.max(), 1e-300))
        osc = float(max(cs.sup(v.values[i] - np.log(np.mean(
            np.exp(cs.values(v.values[i]))))) for i in keep))
        row = {"N": float(N), "window": tuple(window), "sup_error": err_win,
               "a": float(a_fit), "b": float(b_fit), "fit_residual": resid,
               "oscillation": osc, "tag": "ok"}
        rows.append(row)
        last = (v, row)

    errs = [r["sup_error"] for r in rows if r["tag"] == "ok"]
    out = {"rows": rows, "window": tuple(window),
           "monotone": bool(np.all(np.diff(errs) < 0)) if len(errs) > 1 else False,
           "achieved_N": [r["N"] for r in rows if r["tag"] == "ok"]}
    if last is not None:
        _, row = last
        out["blow_up"] = blow_up_comparison(row["a"], row["b"])
    return out


def blow_up_comparison(a, b, z_nodes=None):
    """Compare the metric assembled from the affine profile e^u = b + a zeta
    with the closed-form blow-up limit coefficients
        C1 = (1 + e^z/2)/(1 + e^z),
        C2 = (1 + e^z)/((1 + e^z/2) e^{2z}),
        C3 = (1 + e^z/2) e^{-2z},
    after the coordinate change z -> z + log(a/b) and the fiber/base scaling
    by b/a^2 that normalizes (a, b) to (1, 1)."""
    from .curvature import model_frame_components
    if not (a > 0 and b > 0):
        raise ValueError("blow-up comparison needs a, b > 0")
    if z_nodes is None:
        z_nodes = np.linspace(-1.0, 1.0, 41)
    zp = np.asarray(z_nodes, dtype=float)          # normalized coordinate
    zeta = (b / a) * np.exp(zp)
    fam = ModelFamily("TypeI", a=a, b=b)
    g4, _ = model_frame_components(fam, zeta, n1=1, kahler=False)
    h_zz = g4[:, 0, 0, 0, 0] * zeta**2             # dz = dzeta / zeta
    h_ee = g4[:, 0, 0, 3, 3]
    h_ss = g4[:, 0, 0, 1, 1]
    e = np.exp(zp)
    C1 = (1 + 0.5 * e) / (1 + e)
    C2 = (1 + e) / ((1 + 0.5 * e) * e**2)
    C3 = (1 + 0.5 * e) / e**2
    dev = {
        "dz2": float(np.abs(h_zz - C1).max() / np.abs(C1).max()),
        "eta2": float(np.abs((b**2 / a**2) * h_ee - C2).max() / np.abs(C2).max()),
        "sigma": float(np.abs((b / a**2) * h_ss - C3).max() / np.abs(C3).max()),
    }
    return {"z": zp, "deviations": dev, "max_rel_dev": max(dev.values())}


# ---------------------------------------------------------------------------
# pointed-limit classification

POINTED_TAGS = ("RH4", "blow_up", "CH2", "ch_cusp", "collapsed_line",
                "ambiguous")


def pointed_limit_classifier(cs, v_list, N_list, basepoint,
                             window_radius=1.0, fiber_tol=0.05,
                             ambiguity_factor=2.0):
    """Classify the pointed limit of a degeneration family at base points
    xi(p_N) given by `basepoint` (a callable of N or a sequence).

    The slice-mean profile P = avg e^{v} is sampled on the logarithmic window
    xi0 * [e^{-r}, e^{r}] around the final base point (windows below the
    first grid node clamp to the boundary slice) and compared against the
    local candidate profiles: constant (real hyperbolic regime), linear
    through the origin (complex hyperbolic space or cusp, split by whether
    the base points sink to the boundary), and affine with both terms
    contributing (the blow-up limit).  If the two best candidate deviations
    lie within `ambiguity_factor` of each other the result is reported as
    ambiguous rather than guessed.  Total collapse (all fiber and base
    components below `fiber_tol` at the base point) is tagged
    'collapsed_line'; the classifier cannot represent that limit line
    itself."""
    N_arr = [float(N) for N in N_list]
    xi_seq = np.array([basepoint(N) if callable(basepoint) else basepoint[i]
                       for i, N in enumerate(N_arr)], dtype=float)
    v = v_list[-1]
    xi0 = float(xi_seq[-1])
    P_grid = np.array([np.mean(np.exp(cs.values(v.values[i])))
                       for i in range(len(v.xi))])
    order = np.argsort(v.xi)
    xi_sorted, P_sorted = v.xi[order], P_grid[order]

    # fiber/base component sizes at the base point (collapse detection)
    ubar = np.log(P_sorted)
    with np.errstate(divide="ignore"):
        Wbar = 1.0 - 0.5 * xi_sorted * np.gradient(ubar, xi_sorted)
    W0 = np.interp(xi0, xi_sorted, Wbar)
    ev0 = np.interp(xi0, xi_sorted, P_sorted)
    h_eta = 1.0 / max(W0, 1e-300) / xi0**2
    h_sigma = W0 * ev0 / xi0**2
    if max(h_eta, h_sigma) < fiber_tol:
        return {"tag": "collapsed_line", "xi0": xi0,
                "deviations": {"eta2": h_eta, "sigma": h_sigma},
                "window": (xi0 / np.e, xi0 * np.e)}

    # window samples of the profile
    s = np.exp(np.linspace(-window_radius, window_radius, 17))
    xs = xi0 * s
    P = np.interp(xs, xi_sorted, P_sorted)
    scale = float(np.abs(P).max())

    devs = {}
    c = P.mean()
    devs["RH4"] = float(np.abs(P - c).max() / scale)
    a_lin = float(np.dot(P, xs) / np.dot(xs, xs))
    devs["linear"] = float(np.abs(P - a_lin * xs).max() / scale)
    A = np.vstack([np.ones_like(xs), xs]).T
    (b_aff, a_aff), *_ = np.linalg.lstsq(A, P, rcond=None)
    if a_aff > 0 and b_aff > 0:
        contrib = a_aff * xi0 / (b_aff + a_aff * xi0)
        if 0.1 <= contrib <= 0.9:
            devs["blow_up"] = float(np.abs(A @ [b_aff, a_aff] - P).max() / scale)

    ranked = sorted(devs.items(), key=lambda kv: kv[1])
    floor = 1e-15
    winner, wdev = ranked[0]
    result = {"xi0": xi0, "deviations": devs,
              "window": (float(xs[0]), float(xs[-1])),
              "rho": float(xi0 * np.exp(N_arr[-1]))}
    if len(ranked) > 1 and ranked[1][1] < ambiguity_factor * max(wdev, floor):
        result["tag"] = "ambiguous"
        result["candidates"] = [ranked[0][0], ranked[1][0]]
        return result
    if winner == "linear":
        sinking = xi_seq[-1] < 0.5 * xi_seq[0] and xi_seq[-1] < 0.1
        winner = "CH2" if sinking else "ch_cusp"
    result["tag"] = winner
    return result
