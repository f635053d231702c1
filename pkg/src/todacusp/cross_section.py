"""Closed 2D cross-sections: flat tori of unit area and synthetic-spectrum
surrogates for higher-genus hyperbolic surfaces.

A cross-section exposes its Laplacian (geometer's sign: Delta of a Fourier
mode is -|k|^2 times the mode), an integration functional, a mean-zero
Poisson solver, and a pointwise-evaluation/projection pair so that
nonlinearities like e^u can be formed representation-agnostically.

Fields on a flat torus are real arrays over an (n_x, n_y) sample grid in
lattice coordinates (x, y) in [0,1)^2; the metric enters only through the
Gram matrix of the (area-normalized) lattice basis, so all spectral
operations are exact on the resolved Fourier modes.

Fields on a synthetic surface are coefficient vectors over an abstract
orthonormal eigenbasis with user-assigned eigenvalues; products are formed
on an oversampled auxiliary cosine grid and projected back.
"""

import numpy as np
import scipy.fft


class CrossSection:
    """Common interface: immutable after construction, all operations pure.

    Attributes
    ----------
    kind : str
        "flat_torus" or "synthetic_surface".
    curvature : int
        The constant Gauss curvature K (0 or -1).
    volume : float
        Total area (1 for the torus, 4*pi*(genus-1) for the surrogate).
    dof : int
        Length of a flattened field slice.
    lambda1 : float
        Smallest positive eigenvalue of -Delta.
    """

    kind = None
    curvature = None
    volume = None
    dof = None
    lambda1 = None

    # -- mass bookkeeping ---------------------------------------------------

    def mass_tolerance(self, w):
        """Zero-mean tolerance separating modeling error from fp noise."""
        return 1e-10 * self.sup(w) * self.volume

    def mean(self, f):
        return self.integrate(f) / self.volume

    # subclasses implement: laplacian, integrate, solve_poisson_meanzero,
    # values, project, sup

    def apply_pointwise(self, func, f):
        """Project func(f) (pointwise) back onto the field representation."""
        return self.project(func(self.values(f)))


class FlatTorus(CrossSection):
    """Flat torus R^2 / Lambda with the fundamental domain scaled to area 1.

    Fields are arrays of shape (n_x, n_y) (or flattened, shape (dof,));
    entry [i, j] samples lattice coordinates (i/n_x, j/n_y).  Batched
    operations accept shape (..., dof).
    """

    kind = "flat_torus"
    curvature = 0

    def __init__(self, basis, grid=(64, 64)):
        basis = np.asarray(basis, dtype=float)
        if basis.shape != (2, 2):
            raise ValueError("lattice basis must be a 2x2 matrix")
        det = np.linalg.det(basis)
        if abs(det) < 1e-14 * np.abs(basis).max() ** 2:
            raise ValueError("degenerate lattice basis: columns are (nearly) linearly dependent")
        if det < 0:  # same lattice, positively oriented
            basis = basis[:, ::-1]
            det = -det
        self.basis = basis / np.sqrt(det)
        self.volume = 1.0
        self.grid = tuple(int(n) for n in grid)
        if any(n < 2 or n % 2 for n in self.grid):
            raise ValueError("grid sizes must be even and >= 2")
        nx, ny = self.grid
        self.dof = nx * ny

        # Eigenvalue of -Delta on the mode exp(2*pi*i*(n1*x + n2*y)) is
        # (2*pi)^2 * n^T G^{-1} n with G the Gram matrix of the basis.
        G = self.basis.T @ self.basis
        self._Ginv = np.linalg.inv(G)
        n1 = np.fft.fftfreq(nx, 1.0 / nx)
        n2 = np.fft.fftfreq(ny, 1.0 / ny)
        N1, N2 = np.meshgrid(n1, n2, indexing="ij")
        # The Nyquist index stands for +-N/2 simultaneously; the cross term
        # is symmetrized away there so the multiplier stays Hermitian and
        # real fields map to real fields.
        cross = np.where((np.abs(N1) < nx / 2) & (np.abs(N2) < ny / 2), N1 * N2, 0.0)
        self._neglap = (2 * np.pi) ** 2 * (
            self._Ginv[0, 0] * N1**2 + 2 * self._Ginv[0, 1] * cross + self._Ginv[1, 1] * N2**2
        )
        self._neglap_r = self._neglap[:, : ny // 2 + 1]  # rfft2 layout
        self.lambda1 = self._lambda1_bruteforce()

        x = np.arange(nx) / nx
        y = np.arange(ny) / ny
        self.x, self.y = np.meshgrid(x, y, indexing="ij")

    def _lambda1_bruteforce(self, radius=16):
        n = np.arange(-radius, radius + 1)
        N1, N2 = np.meshgrid(n, n, indexing="ij")
        q = (
            self._Ginv[0, 0] * N1**2 + 2 * self._Ginv[0, 1] * N1 * N2 + self._Ginv[1, 1] * N2**2
        )
        q = q[(N1 != 0) | (N2 != 0)]
        return (2 * np.pi) ** 2 * q.min()

    # -- representation helpers --------------------------------------------

    def _as_grid(self, f):
        f = np.asarray(f, dtype=float)
        return f.reshape(f.shape[:-1] + self.grid) if f.shape[-1] == self.dof else f

    def flatten(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape[-1] == self.dof and (f.ndim < 2 or f.shape[-2:] != self.grid):
            return f
        return f.reshape(f.shape[:-2] + (self.dof,))

    def values(self, f):
        return self.flatten(f)

    def project(self, vals):
        return np.asarray(vals, dtype=float)

    def sup(self, f):
        return float(np.abs(np.asarray(f)).max()) if np.size(f) else 0.0

    # -- calculus -----------------------------------------------------------

    def laplacian(self, f):
        g = self._as_grid(f)
        F = np.fft.rfft2(g, axes=(-2, -1))
        out = np.fft.irfft2(-self._neglap_r * F, s=self.grid, axes=(-2, -1))
        return out.reshape(np.shape(np.asarray(f)))

    def integrate(self, f):
        g = self._as_grid(f)
        return np.asarray(g.mean(axis=(-2, -1)) * self.volume)[()]

    def solve_poisson_meanzero(self, w):
        """Solve -Delta phi = w with mean-zero phi; w must be mean zero."""
        g = self._as_grid(w)
        mass = np.abs(np.atleast_1d(self.integrate(g))).max()
        if mass > self.mass_tolerance(g):
            raise ValueError(f"Poisson source has nonzero mean {mass:.3e} beyond tolerance")
        F = np.fft.rfft2(g, axes=(-2, -1))
        with np.errstate(divide="ignore", invalid="ignore"):
            P = np.where(self._neglap_r > 0, F / self._neglap_r, 0.0)
        out = np.fft.irfft2(P, s=self.grid, axes=(-2, -1))
        return out.reshape(np.shape(np.asarray(w)))

    def grad_squared(self, f):
        """|grad f|^2 integrated over the torus (spectral)."""
        g = self._as_grid(f)
        F = np.fft.fft2(g, axes=(-2, -1))
        return float(np.sum(self._neglap * np.abs(F) ** 2) / self.dof**2)

    def partial_lattice(self, f, axis):
        """Spectral d/ds_axis in lattice coordinates s in [0,1)^2; the Nyquist
        mode is annihilated (odd derivative of the +-N/2 pair averages to 0)."""
        g = self._as_grid(f)
        nx, ny = self.grid
        F = np.fft.rfft2(g, axes=(-2, -1))
        if axis == 0:
            n1 = np.fft.fftfreq(nx, 1.0 / nx)
            mult = 2j * np.pi * np.where(np.abs(n1) == nx / 2, 0.0, n1)[:, None]
        elif axis == 1:
            n2 = np.arange(ny // 2 + 1).astype(float)
            mult = 2j * np.pi * np.where(n2 == ny / 2, 0.0, n2)[None, :]
        else:
            raise ValueError("axis must be 0 or 1")
        out = np.fft.irfft2(mult * F, s=self.grid, axes=(-2, -1))
        return out.reshape(np.shape(np.asarray(f)))

    def partial_euclidean(self, f, axis):
        """d/dX_axis in the Euclidean coordinates X = basis @ s."""
        Binv = np.linalg.inv(self.basis)
        return (Binv[0, axis] * self.partial_lattice(f, 0)
                + Binv[1, axis] * self.partial_lattice(f, 1))

    def rfft_slices(self, F):
        """Batched rfft2 over the flattened dof axis -> (..., n_rmodes)."""
        g = self._as_grid(F)
        return np.fft.rfft2(g, axes=(-2, -1)).reshape(F.shape[:-1] + (-1,))

    def irfft_slices(self, Fm):
        g = Fm.reshape(Fm.shape[:-1] + (self.grid[0], self.grid[1] // 2 + 1))
        out = np.fft.irfft2(g, s=self.grid, axes=(-2, -1))
        return out.reshape(Fm.shape[:-1] + (self.dof,))


class SyntheticSurface(CrossSection):
    """Spectrum-only surrogate for a closed hyperbolic surface of genus >= 2.

    A field is a coefficient vector c over modes phi_0 = 1, phi_j (j >= 1)
    orthonormal under the *average* integral, with -Delta phi_j =
    eigenvalues[j] * phi_j by fiat.  For pointwise operations the modes are
    realized as phi_j(s) = sqrt(2) cos(j*s) on an oversampled Chebyshev-type
    grid s_k = pi (k + 1/2) / M, where discrete orthogonality is exact;
    products of resolved modes are then projected back (truncated
    convolution).
    """

    kind = "synthetic_surface"
    curvature = -1

    def __init__(self, genus, eigenvalues, oversample=8):
        genus = int(genus)
        if genus < 2:
            raise ValueError("synthetic surface requires genus >= 2")
        ev = np.asarray(eigenvalues, dtype=float)
        if ev.ndim != 1 or ev.size < 1:
            raise ValueError("eigenvalues must be a nonempty 1D list")
        if ev[0] != 0.0:
            raise ValueError("eigenvalues[0] must be exactly 0")
        if np.any(ev < 0) or np.any(np.diff(ev) < 0):
            raise ValueError("eigenvalues must be ascending and nonnegative")
        if ev.size > 1 and np.any(ev[1:] == 0):
            raise ValueError("eigenvalues must be strictly positive after lambda_0 = 0")
        self.genus = genus
        self.eigenvalues = ev
        self.volume = 4 * np.pi * (genus - 1)
        self.dof = ev.size
        self.grid = ev.size
        self.lambda1 = float(ev[1]) if ev.size > 1 else np.inf

        self._M = max(32, oversample * self.dof)
        s = np.pi * (np.arange(self._M) + 0.5) / self._M
        # modes-by-samples matrix; row 0 is the constant
        j = np.arange(self.dof)[:, None]
        self._phi = np.where(j == 0, 1.0, np.sqrt(2.0) * np.cos(j * s[None, :]))

    def values(self, c):
        return np.asarray(c, dtype=float) @ self._phi

    def project(self, vals):
        return np.asarray(vals, dtype=float) @ self._phi.T / self._M

    def sup(self, c):
        return float(np.abs(self.values(c)).max()) if np.size(c) else 0.0

    def flatten(self, c):
        return np.asarray(c, dtype=float)

    def laplacian(self, c):
        return -np.asarray(c, dtype=float) * self.eigenvalues

    def integrate(self, c):
        return np.asarray(np.asarray(c, dtype=float)[..., 0] * self.volume)[()]

    def solve_poisson_meanzero(self, w):
        w = np.asarray(w, dtype=float)
        mass = np.abs(np.atleast_1d(self.integrate(w))).max()
        if mass > self.mass_tolerance(w):
            raise ValueError(f"Poisson source has nonzero mean {mass:.3e} beyond tolerance")
        out = np.zeros_like(w)
        if self.dof > 1:
            out[..., 1:] = w[..., 1:] / self.eigenvalues[1:]
        return out

    def grad_squared(self, c):
        c = np.asarray(c, dtype=float)
        return float(self.volume * np.sum(self.eigenvalues * c**2))


def build_flat_torus(basis, grid=(64, 64)):
    """Flat torus from a 2x2 lattice basis (columns generate Lambda); the
    basis is rescaled so the fundamental domain has area exactly 1."""
    return FlatTorus(basis, grid=grid)


def build_synthetic_surface(genus, eigenvalues, oversample=8):
    """Genus-g surrogate with an assigned Laplace spectrum; area from
    Gauss-Bonnet, 4*pi*(genus-1)."""
    return SyntheticSurface(genus, eigenvalues, oversample=oversample)
