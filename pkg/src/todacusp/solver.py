"""Newton/continuation solver for the canonical quasilinear equation

    Delta_Sigma u + Psi(t) (e^u)_tt + B(t) (e^u)_t + 2 K(t) (e^u - 1) = 0

on a truncated cylinder [t0, t0+T] x Sigma with Dirichlet data
u(t0) = phi_normalized (unit slice mass) and u(t0+T) = 0, plus the four
boundary-value-problem adapters that transform the (twisted-)Toda unknown v
into this normal form and back.

The t-direction uses banded finite differences of configurable order
(2/4/6, biased stencils near the boundary) applied to the composite e^u, so
the discrete slice-mass argument survives discretization; the cross-section
is handled spectrally.  Newton steps are solved matrix-free by GMRES,
preconditioned by the frozen-coefficient operator diagonalized per
cross-section mode.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.linalg import LinearOperator, gmres

from .cross_section import CrossSection, FlatTorus, SyntheticSurface
from .models import XI_STAR

DEFAULT_TOL_NEWTON = 1e-10
TOL_MAX_PRINCIPLE = 1e-8


# ---------------------------------------------------------------------------
# finite-difference machinery

def fd_weights(z, x, m):
    """Fornberg weights for the m-th derivative at z from nodes x."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def diff_matrices(nodes, order):
    """Sparse differentiation matrices (D1, D2) on the given nodes.

    Interior rows use centered stencils of the requested order; rows whose
    centered stencil would leave the grid get extra points.  The widening
    matters beyond formal order: boundary layers leave narrow biased rows
    with a rough O(h^order) error layer near the edge that any later
    differentiation of the solution amplifies by 1/h^2.
    """
    if order not in (2, 4, 6, 8):
        raise ValueError("t-stencil order must be 2, 4, 6 or 8")
    n = len(nodes)
    w = order + 1  # centered width (odd)
    half = w // 2
    D1 = sp.lil_matrix((n, n))
    D2 = sp.lil_matrix((n, n))
    for i in range(n):
        lo = i - half
        width = w
        if lo < 0 or lo + w > n:
            width = min(w + 5, n)
            lo = min(max(i - width // 2, 0), n - width)
        idx = np.arange(lo, lo + width)
        for D, m in ((D1, 1), (D2, 2)):
            wts = fd_weights(nodes[i], nodes[idx], m)
            wts[i - lo] -= wts.sum()     # annihilate constants exactly
            D[i, idx] = wts
    return D1.tocsr(), D2.tocsr()


# ---------------------------------------------------------------------------
# coefficient profiles and BVP adapters

class CoefficientProfile:
    """Coefficients (Psi, B, K) of the canonical equation as functions of t
    on [t0, infinity); Psi must be uniformly positive and K nonpositive."""

    def __init__(self, Psi, B, K, t0=0.0, name=""):
        self.Psi, self.B, self.K = Psi, B, K
        self.t0 = float(t0)
        self.name = name

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        Psi = np.broadcast_to(np.asarray(self.Psi(t), dtype=float), t.shape).copy()
        B = np.broadcast_to(np.asarray(self.B(t), dtype=float), t.shape).copy()
        K = np.broadcast_to(np.asarray(self.K(t), dtype=float), t.shape).copy()
        if np.any(Psi <= 0):
            raise ValueError("Psi must be strictly positive on the grid")
        if np.any(K > 0):
            raise ValueError("K must be nonpositive on the grid")
        return Psi, B, K


class VariableMap:
    """Invertible map between the canonical variable t and the moment-map
    coordinate xi, with the model potential v_mod(xi)."""

    def __init__(self, t_of_xi, xi_of_t, v_mod, description):
        self.t_of_xi = t_of_xi
        self.xi_of_t = xi_of_t
        self.v_mod = v_mod
        self.description = description


@dataclass
class BvpSpec:
    """One of the four boundary value problems: id, cross-section, raw
    boundary data phi, and (for the logarithmic-growth problem) the slope a."""

    id: str
    cs: CrossSection
    phi: np.ndarray
    a: float = None

    def __post_init__(self):
        if self.id not in ("BVP1", "BVP2", "BVP3", "BVP4"):
            raise ValueError(f"unknown BVP id {self.id!r}")
        if self.id == "BVP4":
            if not isinstance(self.cs, SyntheticSurface) or self.cs.curvature != -1:
                raise ValueError("BVP4 requires a synthetic surface with K = -1")
        else:
            if not isinstance(self.cs, FlatTorus):
                raise ValueError(f"{self.id} requires a flat torus cross-section")
        if self.id == "BVP2":
            if self.a is None or self.a <= 0:
                raise ValueError("BVP2 requires a > 0")
        elif self.a is not None:
            raise ValueError(f"{self.id} does not take a free parameter a")
        self.phi = self.cs.flatten(np.asarray(self.phi, dtype=float))


def normalize_boundary(cs, phi):
    """Split phi = phi_normalized + phibar with unit slice mass of
    e^{phi_normalized}: phibar = log avg e^phi."""
    phi = cs.flatten(np.asarray(phi, dtype=float))
    phibar = float(np.log(np.mean(np.exp(cs.values(phi)))))
    out = phi.copy()
    if isinstance(cs, SyntheticSurface):
        out[0] -= phibar
    else:
        out -= phibar
    return out, phibar


def adapt_to_canonical(spec):
    """Return (CoefficientProfile, VariableMap, phi_normalized) realizing the
    BVP as the canonical equation."""
    cs = spec.cs
    phi_n, phibar = normalize_boundary(cs, spec.phi)
    ephibar = np.exp(phibar)
    xs = XI_STAR
    if spec.id == "BVP1":
        b = ephibar
        prof = CoefficientProfile(lambda t: b + 0.0 * t, lambda t: 0.0 * t,
                                  lambda t: 0.0 * t, t0=0.0, name="BVP1")
        vm = VariableMap(lambda xi: xi, lambda t: t,
                         lambda xi: phibar + 0.0 * np.asarray(xi),
                         "t = xi, v_mod = phibar")
        return prof, vm, phi_n
    if spec.id == "BVP2":
        a, b = spec.a, ephibar
        prof = CoefficientProfile(lambda t: a**2 / (4 * b) + 0.0 * t,
                                  lambda t: 3 * a**2 / (4 * b * t),
                                  lambda t: 0.0 * t, t0=1.0, name="BVP2")
        vm = VariableMap(lambda xi: np.sqrt((b + a * np.asarray(xi)) / b),
                         lambda t: b * (np.asarray(t) ** 2 - 1) / a,
                         lambda xi: np.log(b + a * np.asarray(xi)),
                         "t = sqrt((b+a xi)/b), v_mod = log(b + a xi)")
        return prof, vm, phi_n
    if spec.id == "BVP3":
        # slice-mass normalization pins a: e^{v_mod}(0) = -a xs / 2 = e^phibar
        a = -2 * ephibar / xs
        prof = CoefficientProfile(
            lambda t: -(a / (8 * xs)) * (2 - 1.0 / np.asarray(t) ** 2),
            lambda t: (a / (8 * xs)) * (30 * t**6 - 33 * t**4 + 9 * t**2 - 1)
            / (t**3 * (3 * t**4 - 3 * t**2 + 1)),
            lambda t: 0.0 * t, t0=1.0, name="BVP3")
        vm = VariableMap(lambda xi: 1.0 / np.sqrt(1 - np.asarray(xi) / xs),
                         lambda t: xs * (1 - 1.0 / np.asarray(t) ** 2),
                         lambda xi: phibar + 3 * np.log(1 - np.asarray(xi) / xs)
                         + np.log(1 + np.asarray(xi) / xs),
                         "t = (1 - xi/xi_*)^{-1/2}")
        return prof, vm, phi_n
    # BVP4
    a = (2.0 / xs) * (xs**2 / 3 - ephibar)

    def Psi(t):
        e = np.exp(-np.asarray(t, dtype=float))
        return 1.0 + (a * xs**2 / 12 - 2.0 / 3.0) * e - (a * xs**2 / 24) * e**2

    def Psi_t(t):
        e = np.exp(-np.asarray(t, dtype=float))
        return -(a * xs**2 / 12 - 2.0 / 3.0) * e + (a * xs**2 / 12) * e**2

    def B(t):
        e = np.exp(-np.asarray(t, dtype=float))
        return 2 * Psi_t(t) - 3 * Psi(t) + 6 * (1 - e) ** 2 / (3 - 3 * e + e**2) * Psi(t)

    prof = CoefficientProfile(Psi, B, lambda t: -1.0 + 0.0 * np.asarray(t),
                              t0=0.0, name="BVP4")
    vm = VariableMap(lambda xi: -np.log(1 - np.asarray(xi) / xs),
                     lambda t: xs * (1 - np.exp(-np.asarray(t))),
                     lambda xi: 2 * np.log(np.asarray(xi) - xs)
                     + np.log(1.0 / 3 - (xs**2 / 18) * np.asarray(xi)
                              + (a / 24) * (xs**2 - np.asarray(xi) ** 2)),
                     "t = -log(1 - xi/xi_*)")
    return prof, vm, phi_n


def continuation_schedule(cs, phi_normalized, s_values=(1.0,)):
    """Boundary slices log(e^{s phi} / avg e^{s phi}) for s on the given
    grid; the solver refines the grid adaptively on Newton failure."""
    out = []
    for s in s_values:
        sl, _ = normalize_boundary(cs, s * phi_normalized)
        out.append(sl)
    return out


# ---------------------------------------------------------------------------
# fields and reports

@dataclass
class ScalarField:
    """A real function on the t-grid x cross-section (flattened dof axis)."""
    values: np.ndarray           # (n_t + 1, dof)
    t: np.ndarray                # (n_t + 1,)
    xi: np.ndarray = None        # (n_t + 1,), when a variable map applies


@dataclass
class SolveReport:
    pde_residual_sup: float = np.nan
    mass_drift_sup: float = np.nan
    newton_iterations: list = field(default_factory=list)
    fitted_decay_rate: float = None
    min_W: float = None
    converged: bool = False
    failure_stage: str = None
    max_principle_ok: bool = None
    grid: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "pde_residual_sup": self.pde_residual_sup,
            "mass_drift_sup": self.mass_drift_sup,
            "newton_iterations": self.newton_iterations,
            "fitted_decay_rate": self.fitted_decay_rate,
            "min_W": self.min_W,
            "converged": self.converged,
            "failure_stage": self.failure_stage,
            "max_principle_ok": self.max_principle_ok,
            "grid": self.grid,
        }


class SolverError(RuntimeError):
    def __init__(self, stage, message, report=None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.report = report


# ---------------------------------------------------------------------------
# the discretized operator

class _BatchedBandLU:
    """Pivoted banded LU factorizations of A - lam_k I for a shared banded
    matrix A and a batch of shifts lam_k.  Partial pivoting is required: the
    widened one-sided edge stencils make the matrix locally far from
    diagonally dominant, and unpivoted elimination blows up on fine grids."""

    def __init__(self, A, lam):
        A = np.asarray(A)
        n = A.shape[0]
        nz = np.nonzero(A)
        kl = int(np.max(nz[0] - nz[1], initial=0))
        ku = int(np.max(nz[1] - nz[0], initial=0))
        # LAPACK general-band storage ab[kl + ku + i - j, j] = A[i, j],
        # with kl extra rows of workspace for the pivoted factors
        base = np.zeros((2 * kl + ku + 1, n))
        for off in range(-kl, ku + 1):
            d = np.diagonal(A, off)
            base[kl + ku - off, max(off, 0): n + min(off, 0)] = d
        lam = np.asarray(lam, dtype=float)
        self.K = len(lam)
        self.kl, self.ku, self.n = kl, ku, n
        self.lus = np.empty((self.K,) + base.shape, order="C")
        self.ipivs = np.empty((self.K, n), dtype=np.int32)
        for k in range(self.K):
            ab = base.copy()
            ab[kl + ku, :] -= lam[k]
            lu, ipiv, info = lapack.dgbtrf(ab, kl, ku)
            if info != 0:
                raise SolverError(
                    "preconditioner",
                    f"banded LU failed for mode {k} (info={info})")
            self.lus[k] = lu
            self.ipivs[k] = ipiv

    def solve(self, R):
        """Solve (A - lam_k I) x_k = r_k for all k; R has shape (n, K) and
        may be complex (real/imaginary parts are solved together)."""
        R = np.asarray(R)
        out = np.empty_like(R)
        cplx = np.iscomplexobj(R)
        for k in range(self.K):
            if cplx:
                rhs = np.column_stack([R[:, k].real, R[:, k].imag])
                x, info = lapack.dgbtrs(self.lus[k], self.kl, self.ku, rhs,
                                        self.ipivs[k])
                out[:, k] = x[:, 0] + 1j * x[:, 1]
            else:
                x, info = lapack.dgbtrs(self.lus[k], self.kl, self.ku,
                                        R[:, k], self.ipivs[k])
                out[:, k] = x
        return out

class _Discretization:
    def __init__(self, profile, cs, T, n_t, fd_order):
        self.cs = cs
        self.n_t = int(n_t)
        self.t = profile.t0 + np.linspace(0.0, T, self.n_t + 1)
        self.Psi, self.B, self.K = profile.sample(self.t)
        self.D1, self.D2 = diff_matrices(self.t, fd_order)
        self.dof = cs.dof
        self.ni = self.n_t - 1
        # coefficients of the constant field 1 in the dof representation
        one_vals = np.ones(self.cs._M if isinstance(cs, SyntheticSurface) else self.dof)
        self.one = cs.project(one_vals)

        # frozen-coefficient preconditioner: for each Sigma-mode with
        # eigenvalue lam_k, factor the banded interior matrix A - lam_k I,
        # A = (Psi D2 + B D1 + 2K); the LU factorizations are batched over k
        Ai = (sp.diags(self.Psi) @ self.D2 + sp.diags(self.B) @ self.D1).toarray()
        A = Ai[1:-1, 1:-1] + 2 * np.diag(self.K[1:-1])
        if isinstance(cs, FlatTorus):
            self.lam = cs._neglap_r.reshape(-1)
        else:
            self.lam = cs.eigenvalues
        self._band_lu = _BatchedBandLU(A, self.lam)

        # rounding floor of the evaluated residual: |Psi| |D2| + |B| |D1|
        # + 2|K| applied to e^u cannot be computed more accurately than
        # eps times its row sums, so no iteration can push the residual
        # below this scale (times sup e^u)
        r2 = np.abs(self.D2).max(axis=1).toarray().ravel()
        r1 = np.abs(self.D1).max(axis=1).toarray().ravel()
        rows = np.abs(self.Psi) * r2 + np.abs(self.B) * r1 + 2 * np.abs(self.K)
        self.residual_floor_coeff = float(rows.max()) * np.finfo(float).eps

    def residual_floor(self, U):
        """The attainable residual scale at the current iterate."""
        sup_u = float(np.abs(self.cs.values(U)).max())
        return 4.0 * self.residual_floor_coeff * np.exp(sup_u)

    # -- mode transforms ----------------------------------------------------

    def _to_modes(self, F):
        if isinstance(self.cs, FlatTorus):
            return self.cs.rfft_slices(F)
        return F

    def _from_modes(self, F):
        if isinstance(self.cs, FlatTorus):
            return self.cs.irfft_slices(F)
        return F

    # -- nonlinearity -------------------------------------------------------

    def exp_field(self, U):
        """e^u in the dof representation, plus the pointwise values needed to
        linearize (row-wise over the t-grid)."""
        vals = self.cs.values(U)
        evals = np.exp(vals)
        return self.cs.project(evals), evals

    def residual(self, U):
        E, _ = self.exp_field(U)
        F = (self.cs.laplacian(U)
             + self.Psi[:, None] * (self.D2 @ E)
             + self.B[:, None] * (self.D1 @ E)
             + 2 * self.K[:, None] * (E - self.one[None, :]))
        return F[1:-1]

    def jacobian_matvec(self, U, evals):
        D1, D2 = self.D1, self.D2

        def mv(dflat):
            dU = np.zeros((self.n_t + 1, self.dof))
            dU[1:-1] = dflat.reshape(self.ni, self.dof)
            dE = self.cs.project(evals * self.cs.values(dU))
            out = (self.cs.laplacian(dU)
                   + self.Psi[:, None] * (D2 @ dE)
                   + self.B[:, None] * (D1 @ dE)
                   + 2 * self.K[:, None] * dE)
            return out[1:-1].reshape(-1)

        return mv

    def precond_matvec(self):
        lu = self._band_lu

        def mv(rflat):
            R = rflat.reshape(self.ni, self.dof)
            Rm = self._to_modes(R)
            X = lu.solve(Rm)
            return self._from_modes(X).reshape(-1)

        return mv


def _newton(disc, U, tol, max_iter=40, gmres_maxiter=300):
    """Newton iteration with step-halving line search; returns iterations
    taken or raises SolverError.

    Convergence target: max(tol, rounding floor of the evaluated residual).
    On fine grids the floor exceeds very tight tolerances and no iteration
    can do better; stopping there is the honest optimum, and the achieved
    residual is what gets reported."""
    M = LinearOperator((disc.ni * disc.dof,) * 2, matvec=disc.precond_matvec(),
                       dtype=float)
    F = disc.residual(U)
    res = np.abs(F).max()
    iters = 0
    while res > max(tol, disc.residual_floor(U)):
        if iters >= max_iter:
            raise SolverError("newton", f"no convergence after {max_iter} iterations, residual {res:.3e}")
        _, evals = disc.exp_field(U)
        J = LinearOperator((disc.ni * disc.dof,) * 2,
                           matvec=disc.jacobian_matvec(U, evals), dtype=float)
        forcing = 0.05  # inexact-Newton forcing term; the preconditioner
        # makes each linear solve cheap, so convergence is residual-driven
        d, info = gmres(J, -F.reshape(-1), M=M, rtol=forcing, atol=0.0,
                        maxiter=gmres_maxiter, restart=50)
        if info != 0:
            raise SolverError("gmres", f"linear solve stalled (info={info}) at residual {res:.3e}")
        step = d.reshape(disc.ni, disc.dof)
        alpha = 1.0
        while True:
            U_try = U.copy()
            U_try[1:-1] += alpha * step
            F_try = disc.residual(U_try)
            res_try = np.abs(F_try).max()
            if res_try < res or res_try <= tol:
                break
            alpha *= 0.5
            if alpha < 2.0**-20:
                if res <= 4 * max(tol, disc.residual_floor(U)):
                    return iters, res        # stalled at the rounding floor
                raise SolverError("line_search", f"step collapsed below 2^-20 at residual {res:.3e}")
        U[...] = U_try
        F, res = F_try, res_try
        iters += 1
    return iters, res


def solve(profile, cs, phi_normalized, T, n_t, tol_newton=DEFAULT_TOL_NEWTON,
          fd_order=4, varmap=None, schedule=None):
    """Solve the canonical Dirichlet problem on [t0, t0+T] by Newton
    continuation in the boundary data.  Returns (ScalarField, SolveReport).

    `schedule` optionally forces intermediate continuation targets in (0, 1];
    the solver still halves steps adaptively on Newton failure."""
    phi_normalized = cs.flatten(np.asarray(phi_normalized, dtype=float))
    disc = _Discretization(profile, cs, T, n_t, fd_order)
    report = SolveReport(grid={"T": T, "n_t": n_t, "dof": cs.dof,
                               "fd_order": fd_order, "t0": profile.t0})

    targets = sorted(set(schedule or [])) + [1.0] if schedule else [1.0]
    targets = [s for s in targets if 0.0 < s <= 1.0]
    U = np.zeros((n_t + 1, cs.dof))
    s_done = 0.0
    s_step = 1.0
    phi_sup = cs.sup(phi_normalized)
    while s_done < 1.0:
        nxt = next(s for s in targets if s > s_done)
        s = min(nxt, s_done + s_step)
        [bdry] = continuation_schedule(cs, phi_normalized, [s])
        U_try = U.copy()
        U_try[0] = bdry
        try:
            iters, res = _newton(disc, U_try, tol_newton)
        except SolverError as err:
            s_step *= 0.5
            if s_step < 1e-4:
                report.failure_stage = f"continuation s={s:.6f}: {err}"
                report.newton_iterations.append((s, -1))
                raise SolverError("continuation", f"step underflow at s={s:.6f}", report) from err
            continue
        U = U_try
        s_done = s
        report.newton_iterations.append((s, iters))
        report.pde_residual_sup = float(res)

    E, _ = disc.exp_field(U)
    mass = np.array([cs.integrate(E[i]) / cs.volume for i in range(n_t + 1)])
    report.mass_drift_sup = float(np.abs(mass - 1.0).max())
    report.max_principle_ok = bool(cs.sup(U) <= phi_sup + TOL_MAX_PRINCIPLE)
    report.converged = True

    xi = varmap.xi_of_t(disc.t) if varmap is not None else None
    return ScalarField(U, disc.t, xi=xi), report


def solve_bvp(spec, T, n_t, tol_newton=DEFAULT_TOL_NEWTON, fd_order=4):
    """Adapter + solve + v-recovery for a BvpSpec.  Returns
    (u: ScalarField, v: ScalarField, report)."""
    profile, vm, phi_n = adapt_to_canonical(spec)
    u, report = solve(profile, spec.cs, phi_n, T, n_t,
                      tol_newton=tol_newton, fd_order=fd_order, varmap=vm)
    v = recover_v(u, spec)
    return u, v, report


def recover_v(u, spec):
    """v = v_mod + u in the xi variable (same nodes as u's grid)."""
    _, vm, _ = adapt_to_canonical(spec)
    xi = vm.xi_of_t(u.t)
    vmod = np.asarray(vm.v_mod(xi), dtype=float)
    V = u.values.copy()
    if isinstance(spec.cs, SyntheticSurface):
        V[:, 0] += vmod
    else:
        V += vmod[:, None]
    return ScalarField(V, u.t, xi=xi)


# ---------------------------------------------------------------------------
# decay-rate fitting

RATE_MODELS = ("exp_t", "exp_sqrt_xi", "exp_inv_sqrt", "power")


def fit_decay(u, rate_model, cs=None, window=(0.0, 0.9), floor=None):
    """Least-squares fit of log sup_Sigma |u(t, .)| against the rate model's
    abscissa; returns (delta, diagnostics dict).

    exp_t:        log sup |u| ~ c - delta * t
    exp_sqrt_xi:  ~ c - delta * sqrt(xi)
    exp_inv_sqrt: ~ c - delta * (xi - xi_*)^{-1/2}
    power:        ~ c + delta * log(xi - xi_*)
    """
    if rate_model not in RATE_MODELS:
        raise ValueError(f"unknown rate model {rate_model!r}")
    if cs is not None:
        prof = np.array([cs.sup(u.values[i]) for i in range(len(u.t))])
    else:
        prof = np.abs(u.values).max(axis=1)
    n = len(u.t)
    lo = int(window[0] * n)
    hi = max(lo + 3, int(window[1] * n))  # exclude the truncation-polluted tail
    sel = slice(lo, hi)
    prof = prof[sel]
    t = u.t[sel]
    xi = u.xi[sel] if u.xi is not None else None
    if np.all(prof <= 1e-13):
        return None, {"status": "below_floor", "sup_profile": prof}
    if floor is None:
        # stay clearly above the solver/rounding noise floor
        floor = max(1e-13, 1e-6 * prof.max())
    keep = prof > floor
    if keep.sum() < 3:
        keep = prof > 1e-13
    prof, t = prof[keep], t[keep]
    if xi is not None:
        xi = xi[keep]
    if rate_model == "exp_t":
        absc = t - t[0]
    elif rate_model == "exp_sqrt_xi":
        absc = np.sqrt(np.maximum(xi, 0.0))
    elif rate_model == "exp_inv_sqrt":
        absc = 1.0 / np.sqrt(np.maximum(xi - XI_STAR, 1e-300))
    else:  # power
        absc = np.log(np.maximum(xi - XI_STAR, 1e-300))
    y = np.log(prof)
    A = np.vstack([absc, np.ones_like(absc)]).T
    (slope, intercept), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitres = float(np.sqrt(np.mean((A @ [slope, intercept] - y) ** 2)))
    if rate_model == "power":
        delta = slope
    else:
        delta = -slope
    return float(delta), {"status": "ok", "fit_rms": fitres, "intercept": float(intercept)}
