"""Bilinear test systems: three PDE discretizations plus seeded random instances."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .core import BilinearSystem, check_contraction, todense

# above this dimension generators return scipy.sparse matrices
SPARSE_ABOVE = 2000


def _maybe_dense(M, sparse):
    return M.tocsr() if sparse else todense(M)


def _second_difference(k, h):
    return sps.diags([np.ones(k - 1), -2.0 * np.ones(k), np.ones(k - 1)], [-1, 0, 1]) / h**2


def heat2d(nx, sparse=None):
    """Heat equation on the unit square cooled through a bilinear Robin boundary.

    Homogeneous Dirichlet conditions hold on x=1, y=0 and y=1; on x=0 the
    condition -w_x = 0.5 (w - 1) u is eliminated with a ghost node. The x-grid
    holds nx nodes 0, h, ..., 1-h (h = 1/nx), the y-grid the nx interior
    nodes of a uniform grid with spacing 1/(nx+1); unknowns are ordered with
    x fastest, so n = nx**2.

    The ghost-node row at x=0 carries a factor 2 on its neighbour; the
    diagonal similarity scaling boundary unknowns by 1/sqrt(2) makes A
    symmetric and leaves the diagonal N unchanged.
    """
    if nx < 3:
        raise ValueError("nx must be at least 3")
    n = nx * nx
    if sparse is None:
        sparse = n > SPARSE_ABOVE
    hx = 1.0 / nx
    hy = 1.0 / (nx + 1)
    Dx = _second_difference(nx, hx).tolil()
    Dx[0, 1] = 2.0 / hx**2
    s = np.ones(nx)
    s[0] = 1.0 / np.sqrt(2.0)
    S = sps.diags(s)
    Dx = S @ Dx.tocsr() @ sps.diags(1.0 / s)
    Dy = _second_difference(nx, hy)
    Ix = sps.identity(nx)
    A = sps.kron(Ix, Dx) + sps.kron(Dy, Ix)
    # kron(Ix, Dx) is exactly symmetric only up to rounding in the scaling
    A = 0.5 * (A + A.T)
    e0 = np.zeros(nx)
    e0[0] = 1.0
    N = sps.kron(Ix, sps.diags(e0)) / hx
    B = -np.kron(np.ones(nx), s * e0) / hx
    return BilinearSystem(_maybe_dense(A, sparse), (_maybe_dense(N, sparse),), B.reshape(-1, 1), symmetric=True)


def ground_potential_slope(x):
    """Derivative of W(x) = (((0.5x^2 - 15)x^2 + 199)x^2 + 28x + 50)/200."""
    return (3.0 * x**5 - 60.0 * x**3 + 398.0 * x + 28.0) / 200.0


def ground_potential(x):
    return (((0.5 * x**2 - 15.0) * x**2 + 199.0) * x**2 + 28.0 * x + 50.0) / 200.0


def _flux_operator(n, nu, velocity, a=-6.0, b=6.0):
    """Finite-volume matrix of rho_t = d/dx(nu rho_x - c rho) with zero flux at both ends.

    The convective interface flux is upwinded on the sign of c.
    """
    h = (b - a) / n
    xf = a + h * np.arange(1, n)
    c = velocity(xf)
    rows, cols, vals = [], [], []
    for k in range(n - 1):
        i, j = k, k + 1
        # flux G through interface k, counted positive into cell i
        terms = [(j, nu / h), (i, -nu / h)]
        terms.append((i, -c[k]) if c[k] > 0 else (j, -c[k]))
        for col, g in terms:
            rows += [i, j]
            cols += [col, col]
            vals += [g / h, -g / h]
    return sps.csr_matrix((vals, (rows, cols)), shape=(n, n))


def fokker_planck_raw(n, nu=1.0, control_slope=1.0 / 6.0):
    """Unprojected drift and control operators on (-6, 6) with n cells.

    The control shape is alpha(x) = control_slope * x.
    """
    A = _flux_operator(n, nu, lambda x: -ground_potential_slope(x))
    N = _flux_operator(n, 0.0, lambda x: -control_slope * np.ones_like(x))
    return A, N


def fokker_planck_1d(n, nu=1.0, control_slope=1.0 / 6.0, zero_tol=1e-8):
    """Fokker-Planck equation with optical-tweezer control, decoupled from its stationary mode.

    The raw upwind operator conserves probability (zero column sums), so it
    has a zero eigenvalue whose right eigenvector is the stationary density
    rho_inf. The state deviation from rho_inf evolves in the complement of
    the constant vector, where the dynamics are asymptotically stable. The
    returned system of dimension n-1 is expressed in an orthonormal basis of
    that complement, with B the projected N @ rho_inf.
    """
    if n < 10:
        raise ValueError("n must be at least 10")
    if nu <= 0:
        raise ValueError("nu must be positive")
    A_raw, N_raw = fokker_planck_raw(n, nu, control_slope)
    A = todense(A_raw)
    N = todense(N_raw)
    lam, vecs = np.linalg.eig(A)
    near_zero = np.abs(lam) <= zero_tol
    if int(near_zero.sum()) != 1:
        raise ValueError(f"zero eigenvalue is not simple at n={n} ({int(near_zero.sum())} near-zero eigenvalues)")
    rho_inf = np.real(vecs[:, np.argmax(near_zero)])
    rho_inf = rho_inf / rho_inf.sum()
    # Householder reflector mapping e_1 to the normalized constant vector
    u = np.ones(n) / np.sqrt(n)
    u[0] -= 1.0
    u /= np.linalg.norm(u)
    H = np.eye(n) - 2.0 * np.outer(u, u)
    T = H[:, 1:]
    Ap = T.T @ A @ T
    Np = T.T @ N @ T
    Bp = T.T @ (N @ rho_inf)
    return BilinearSystem(Ap, (Np,), Bp.reshape(-1, 1))


def burgers_carleman(n_grid, nu=0.1, alpha=0.25, sparse=None):
    """Second-order Carleman bilinearization of viscous Burgers with boundary control.

    Centered differences on the n_grid interior nodes of (0, 1) with
    w(0) = u and w(1) = 0 give

        w' = A1 w + H (w kron w) + N1 w u + b1 u,

    and the lifted state [w; w kron w] (third order terms dropped) gives a
    bilinear system of dimension n_grid + n_grid**2. N and B are scaled by
    alpha.
    """
    if n_grid < 5:
        raise ValueError("n_grid must be at least 5")
    if nu <= 0 or alpha <= 0:
        raise ValueError("nu and alpha must be positive")
    k = n_grid
    n = k + k * k
    if sparse is None:
        sparse = n > SPARSE_ABOVE
    h = 1.0 / (k + 1)
    I = sps.identity(k, format="csr")
    A1 = nu * _second_difference(k, h).tocsr()
    rows, cols, vals = [], [], []
    for i in range(k):
        # -w_i (w_{i+1} - w_{i-1}) / (2h)
        if i + 1 < k:
            rows.append(i)
            cols.append(i * k + i + 1)
            vals.append(-1.0 / (2 * h))
        if i >= 1:
            rows.append(i)
            cols.append(i * k + i - 1)
            vals.append(1.0 / (2 * h))
    H = sps.csr_matrix((vals, (rows, cols)), shape=(k, k * k))
    N1 = sps.csr_matrix(([1.0 / (2 * h)], ([0], [0])), shape=(k, k))
    b1 = np.zeros((k, 1))
    b1[0, 0] = nu / h**2
    b1s = sps.csr_matrix(b1)
    A = sps.bmat([[A1, H], [None, sps.kron(A1, I) + sps.kron(I, A1)]])
    N = sps.bmat([[N1, None], [sps.kron(b1s, I) + sps.kron(I, b1s), sps.kron(N1, I) + sps.kron(I, N1)]])
    B = np.vstack([b1, np.zeros((k * k, 1))])
    return BilinearSystem(_maybe_dense(A, sparse), (_maybe_dense(alpha * N, sparse),), alpha * B)


def random_system(n, m=1, r=1, seed=0, symmetric=True, contraction=0.5, spread=(1.0, 10.0)):
    """Seeded random stable system with rho(L^-1 Pi) equal to ``contraction``.

    Symmetric instances have A = -Q diag(d) Q^T with d uniform in ``spread``
    and symmetric Gaussian N_i; non-symmetric ones add a skew part to A
    (which keeps it stable) and use unsymmetric N_i.
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = rng.uniform(*spread, size=n)
    A = -(Q * d) @ Q.T
    A = 0.5 * (A + A.T)
    Ns = []
    for _ in range(m):
        G = rng.standard_normal((n, n)) / np.sqrt(n)
        Ns.append(0.5 * (G + G.T) if symmetric else G)
    if not symmetric:
        K = rng.standard_normal((n, n))
        A = A + 0.5 * np.mean(d) * (K - K.T) / np.sqrt(n)
    B = rng.standard_normal((n, r))
    if m and contraction is not None:
        rho0 = check_contraction(BilinearSystem(A, tuple(Ns), B))
        Ns = [N * np.sqrt(contraction / rho0) for N in Ns]
    return BilinearSystem(A, tuple(Ns), B, symmetric=symmetric)


@dataclass(frozen=True)
class Heat2D:
    nx: int = 8

    def build(self):
        return heat2d(self.nx)


@dataclass(frozen=True)
class FokkerPlanck1D:
    n: int = 100
    nu: float = 1.0

    def build(self):
        return fokker_planck_1d(self.n, self.nu)


@dataclass(frozen=True)
class BurgersCarleman:
    n_grid: int = 10
    nu: float = 0.1
    alpha: float = 0.25

    def build(self):
        return burgers_carleman(self.n_grid, self.nu, self.alpha)


@dataclass(frozen=True)
class RandomInstance:
    n: int = 20
    m: int = 1
    r: int = 1
    seed: int = 0
    symmetric: bool = True
    contraction: float = 0.5

    def build(self):
        return random_system(self.n, self.m, self.r, self.seed, self.symmetric, self.contraction)


BENCHMARKS = {
    "heat2d": Heat2D,
    "fokker_planck": FokkerPlanck1D,
    "burgers": BurgersCarleman,
    "random": RandomInstance,
}


def parse_benchmark(text):
    """Parse ``NAME:key=value,...`` (e.g. ``heat2d:nx=8``) into a benchmark parameter object."""
    name, _, params = text.partition(":")
    name = name.strip().lower().replace("-", "_")
    if name not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}")
    cls = BENCHMARKS[name]
    kwargs = {}
    fields = cls.__dataclass_fields__
    for item in filter(None, (p.strip() for p in params.split(","))):
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in fields:
            raise ValueError(f"{name} has no parameter {key!r}")
        typ = fields[key].type
        if typ in (bool, "bool"):
            kwargs[key] = value.strip().lower() in ("1", "true", "yes")
        elif typ in (int, "int"):
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    return cls(**kwargs)


def spec_to_string(spec):
    name = next(k for k, v in BENCHMARKS.items() if isinstance(spec, v))
    params = ",".join(f"{k}={getattr(spec, k)}" for k in spec.__dataclass_fields__)
    return f"{name}:{params}"
