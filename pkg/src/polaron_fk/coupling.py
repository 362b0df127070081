"""Coupling functions v(x, k) on finite mode sets.

Two models ship: polarons confined to a rectangle (closed-form Dirichlet
eigenfunctions) and the Froehlich coupling on R^3, discretized by a radial
Gauss-Legendre x spherical quadrature with weights folded into coefficients.
Both return v and its analytic x-gradient, extended by zero outside the domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import ModeSet
from .stochastic import Domain


class Unattainable(RuntimeError):
    """No point of the sigma grid satisfies the requested inequality."""


# ------------------------------------------------------------ theta kinds

def make_theta(kind: str):
    """Weight function for the confined model: 'inverse' (1/t), 'one', or 'power:<a>' (t^a)."""
    if kind == "inverse":
        return lambda t: 1.0 / np.asarray(t, dtype=float)
    if kind == "one":
        return lambda t: np.ones_like(np.asarray(t, dtype=float))
    if kind.startswith("power:"):
        a = float(kind.split(":", 1)[1])
        return lambda t: np.asarray(t, dtype=float) ** a
    raise ValueError(f"unknown theta kind {kind!r}")


def check_theta_growth(kind: str, m: int = 2, t_min: float = 1.0, eps_grid=(0.5, 0.25, 0.1, 0.01)) -> bool:
    """Numerical check that t^{eps - 1 + m/2} theta(t) stays bounded for some eps > 0.

    Evaluated on a log grid up to 1e12; bounded means the tail of the sampled
    sequence does not exceed its head.
    """
    theta = make_theta(kind)
    t = np.logspace(math.log10(t_min), 12, 400)
    for eps in eps_grid:
        f = t ** (eps - 1 + m / 2) * theta(t)
        if np.all(np.isfinite(f)) and f[-50:].max() <= f[:350].max() * (1 + 1e-12):
            return True
    return False


# ------------------------------------------------------------------ models

class CouplingModel:
    """Base class: subclasses implement ``_v`` and ``_grad_v`` on arrays (..., d)."""
    d: int
    nu: int
    domain: Domain
    mode_set: ModeSet
    is_real: bool = False

    @property
    def M(self) -> int:
        return self.mode_set.M

    @property
    def lam(self) -> np.ndarray:
        return self.mode_set.lam

    def v(self, x) -> np.ndarray:
        """v(x, .) of shape (..., M); zero outside the domain."""
        x = np.asarray(x, dtype=float)
        out = self._v(x)
        if self.domain.kind != "full":
            out = out * self.domain.contains(x)[..., None]
        return out

    def grad_v(self, x) -> np.ndarray:
        """x-gradient of shape (..., d, M); zero outside the domain."""
        x = np.asarray(x, dtype=float)
        out = self._grad_v(x)
        if self.domain.kind != "full":
            out = out * self.domain.contains(x)[..., None, None]
        return out

    def _v(self, x):
        raise NotImplementedError

    def _grad_v(self, x):
        raise NotImplementedError

    def weighted(self, weights) -> "WeightedCoupling":
        return WeightedCoupling(self, weights)

    def below(self, sigma: float) -> "WeightedCoupling":
        """The infrared part: modes with lambda < sigma."""
        return self.weighted((self.lam < sigma).astype(float))

    def above(self, sigma: float) -> "WeightedCoupling":
        """The ultraviolet part: modes with lambda >= sigma."""
        return self.weighted((self.lam >= sigma).astype(float))

    @property
    def base_weights(self):
        return np.ones(self.M)

    def default_x_grid(self, per_axis: int = 64, max_points: int = 4096) -> np.ndarray:
        raise NotImplementedError


class WeightedCoupling(CouplingModel):
    """Same model with every mode coefficient multiplied by a fixed real weight."""

    def __init__(self, base: CouplingModel, weights):
        while isinstance(base, WeightedCoupling):
            weights = np.asarray(weights, dtype=float) * base.weights
            base = base.base
        self.base = base
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        if self.weights.size != base.M:
            raise ValueError("weight vector length differs from the mode count")
        self.d, self.nu, self.domain = base.d, base.nu, base.domain
        self.mode_set = base.mode_set
        self.is_real = base.is_real

    def _v(self, x):
        return self.base._v(x) * self.weights

    def _grad_v(self, x):
        return self.base._grad_v(x) * self.weights

    def default_x_grid(self, per_axis: int = 64, max_points: int = 4096):
        return self.base.default_x_grid(per_axis, max_points)

    def __getattr__(self, name):
        # fall through to model specific attributes (L, modes, g, ...)
        if name == "base":
            raise AttributeError(name)
        return getattr(self.base, name)


class ConfinedCoupling(CouplingModel):
    """nu polarons in the rectangle (0,L1) x (0,L2) coupled to its Dirichlet modes."""
    is_real = True

    def __init__(self, L=(math.pi, math.pi), modes=((1, 1),), g: float = 1.0, nu: int = 1,
                 theta: str = "inverse"):
        self.L = (float(L[0]), float(L[1]))
        self.modes = np.asarray(modes, dtype=np.int64).reshape(-1, 2)
        if np.any(self.modes < 1):
            raise ValueError("mode indices must be positive")
        self.g = float(g)
        self.nu = int(nu)
        self.theta_kind = theta
        self.d = 2 * self.nu
        self.domain = Domain.box([0.0, 0.0] * self.nu, [self.L[0], self.L[1]] * self.nu)
        lam = self.eigenvalues(self.L, self.modes)
        self.mode_set = ModeSet(lam)
        theta_vals = make_theta(theta)(lam)
        self.coef = self.g * np.sqrt(theta_vals) * 2.0 / math.sqrt(self.L[0] * self.L[1])
        self.wavenumbers = np.pi * self.modes / np.asarray(self.L)   # (M, 2)

    @staticmethod
    def eigenvalues(L, modes):
        modes = np.asarray(modes, dtype=float).reshape(-1, 2)
        return 0.5 * math.pi ** 2 * (modes[:, 0] ** 2 / L[0] ** 2 + modes[:, 1] ** 2 / L[1] ** 2)

    @staticmethod
    def lowest_modes(L, count: int):
        """The ``count`` modes of smallest eigenvalue, ties ordered by (n1, n2)."""
        sigma = 0.5 * math.pi ** 2 * (1 / L[0] ** 2 + 1 / L[1] ** 2)
        while True:
            cand = ConfinedCoupling.modes_below(L, sigma)
            if len(cand) >= count:
                return cand[:count]
            sigma *= 2

    @staticmethod
    def modes_below(L, sigma_max: float):
        L = (float(L[0]), float(L[1]))
        n1 = int(math.floor(L[0] * math.sqrt(2 * sigma_max) / math.pi)) + 1
        n2 = int(math.floor(L[1] * math.sqrt(2 * sigma_max) / math.pi)) + 1
        cand = [(a, b) for a in range(1, n1 + 1) for b in range(1, n2 + 1)]
        lam = ConfinedCoupling.eigenvalues(L, cand)
        keep = [i for i in range(len(cand)) if lam[i] <= sigma_max]
        keep.sort(key=lambda i: (round(lam[i], 12), cand[i]))
        return [cand[i] for i in keep]

    def eigenfunctions(self, y) -> np.ndarray:
        """phi_n(y) for points y (..., 2); returns (..., M)."""
        y = np.asarray(y, dtype=float)
        s1 = np.sin(y[..., 0, None] * self.wavenumbers[:, 0])
        s2 = np.sin(y[..., 1, None] * self.wavenumbers[:, 1])
        return 2.0 / math.sqrt(self.L[0] * self.L[1]) * s1 * s2

    def _v(self, x):
        parts = x.reshape(x.shape[:-1] + (self.nu, 2))
        s1 = np.sin(parts[..., 0, None] * self.wavenumbers[:, 0])
        s2 = np.sin(parts[..., 1, None] * self.wavenumbers[:, 1])
        return self.coef * (s1 * s2).sum(axis=-2)

    def _grad_v(self, x):
        parts = x.reshape(x.shape[:-1] + (self.nu, 2))
        k1, k2 = self.wavenumbers[:, 0], self.wavenumbers[:, 1]
        a1 = parts[..., 0, None] * k1
        a2 = parts[..., 1, None] * k2
        g1 = self.coef * k1 * np.cos(a1) * np.sin(a2)
        g2 = self.coef * k2 * np.sin(a1) * np.cos(a2)
        out = np.stack([g1, g2], axis=-2)            # (..., nu, 2, M)
        return out.reshape(x.shape[:-1] + (self.d, self.M))

    def default_x_grid(self, per_axis: int = 64, max_points: int = 4096):
        n = per_axis if self.d <= 2 else max(2, int(math.floor(max_points ** (1.0 / self.d))))
        axes = []
        for j in range(self.d):
            Lj = self.L[j % 2]
            axes.append((np.arange(n) + 0.5) * Lj / n)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.d)


def gauss_legendre_panels(edges, nodes_per_panel: int):
    """Composite Gauss-Legendre rule on consecutive intervals given by ``edges``."""
    xg, wg = np.polynomial.legendre.leggauss(nodes_per_panel)
    r, w = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        r.append(0.5 * (b - a) * xg + 0.5 * (a + b))
        w.append(0.5 * (b - a) * wg)
    return np.concatenate(r), np.concatenate(w)


def sphere_rule(order: int):
    """Quadrature on the unit sphere exact for polynomials up to ``order``.

    Uses scipy's Lebedev tables when the order is tabulated, otherwise a
    Gauss-Legendre (cos polar angle) x uniform (azimuth) product rule.
    """
    from scipy.integrate import lebedev_rule
    lebedev_orders = (3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31, 35, 41, 47, 53,
                      59, 65, 71, 77, 83, 89, 95, 101, 107, 113, 119, 125, 131)
    fit = [o for o in lebedev_orders if o >= order]
    if fit:
        pts, w = lebedev_rule(fit[0])
        return pts.T.copy(), w
    n_polar = order // 2 + 1
    n_az = order + 1
    c, wc = np.polynomial.legendre.leggauss(n_polar)
    phi = 2 * np.pi * np.arange(n_az) / n_az
    s = np.sqrt(1 - c ** 2)
    pts = np.stack([np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)),
                    np.outer(c, np.ones(n_az))], axis=-1).reshape(-1, 3)
    w = np.outer(wc, np.full(n_az, 2 * np.pi / n_az)).reshape(-1)
    return pts, w


class FroehlichCoupling(CouplingModel):
    """Froehlich coupling for nu polarons in R^3 on a quadrature grid of |k| <= k_max.

    The radial rule is composite Gauss-Legendre with panel edges ``radial_edges``
    (k_max is the last edge); putting edges at sqrt(2 sigma) for every cutoff of
    interest makes the sharp cutoffs exact mode selections.
    """

    def __init__(self, g: float = 1.0, nu: int = 1, radial_edges=(0.0, 10.0), radial_nodes: int = 16,
                 angular_order: int = 31):
        self.g = float(g)
        self.nu = int(nu)
        self.d = 3 * self.nu
        self.domain = Domain.full(self.d)
        edges = np.asarray(radial_edges, dtype=float)
        if edges[0] != 0 or np.any(np.diff(edges) <= 0):
            raise ValueError("radial edges must start at 0 and increase")
        self.radial_edges = edges
        r, wr = gauss_legendre_panels(edges, radial_nodes)
        dirs, wo = sphere_rule(angular_order)
        self.k = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        w = (wr * r ** 2)[:, None] * wo[None, :]
        self.weights = w.reshape(-1)
        knorm = np.repeat(r, dirs.shape[0])
        self.coef = self.g * (2 * np.pi) ** -1.5 * math.sqrt(2.0) / knorm * np.sqrt(self.weights)
        self.mode_set = ModeSet(0.5 * knorm ** 2)

    @staticmethod
    def pointwise(g, x, k):
        """Continuum v(x, k) for one polaron, no quadrature weight."""
        k = np.asarray(k, dtype=float)
        return g * np.exp(-1j * np.dot(k, x)) * (2 * np.pi) ** -1.5 * math.sqrt(2.0) / np.linalg.norm(k)

    def _phases(self, x):
        parts = x.reshape(x.shape[:-1] + (self.nu, 3))
        return np.exp(-1j * np.einsum("...jc,mc->...jm", parts, self.k))   # (..., nu, M)

    def _v(self, x):
        return self.coef * self._phases(x).sum(axis=-2)

    def _grad_v(self, x):
        ph = self._phases(x)                                          # (..., nu, M)
        g = -1j * ph[..., :, None, :] * self.k.T[None, :, :] * self.coef  # (..., nu, 3, M)
        return g.reshape(x.shape[:-1] + (self.d, self.M))

    def default_x_grid(self, per_axis: int = 64, max_points: int = 4096):
        # |sum_j exp(-i k x_j)| is maximal when all polarons coincide and the
        # gradient term does not depend on x, so the origin realizes the sup.
        return np.zeros((1, self.d))


# ------------------------------------------------------- split and constants

def uv_split(model: CouplingModel, sigma: float, x):
    """(v_sigma, v_tilde): modes with lambda >= sigma and lambda < sigma."""
    vx = model.v(x)
    hi = model.lam >= sigma
    return vx * hi, vx * ~hi


def L_E(model: CouplingModel, E: float, x_grid=None, chunk: int = 1024) -> float:
    """sup over the x grid of (sum_k [E|v|^2 + |grad v|^2/2] / (E + lambda)^2)^{1/2}."""
    if E < 1:
        raise ValueError("L_E needs E >= 1")
    xs = model.default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    denom = (E + model.lam) ** 2
    best = 0.0
    for s in range(0, xs.shape[0], chunk):
        xb = xs[s:s + chunk]
        v = model.v(xb)
        gv = model.grad_v(xb)
        num = E * np.abs(v) ** 2 + 0.5 * np.sum(np.abs(gv) ** 2, axis=-2)
        best = max(best, float(np.max((num / denom).sum(axis=-1))))
    return math.sqrt(best)


def sigma_grid(model: CouplingModel):
    """Candidate cutoffs: 2 and, for every level lambda >= 2, the next float above it.

    L_1(v_sigma) is constant between levels and drops right after each one, so
    the smallest admissible grid point realizes the infimum up to one ulp.
    """
    lev = np.unique(model.lam[model.lam >= 2.0])
    return np.concatenate([[2.0], np.nextafter(lev, np.inf)])


def _smallest_admissible(model, ok, grid):
    grid = sigma_grid(model) if grid is None else np.sort(np.asarray(grid, dtype=float))
    lo, hi = 0, grid.size - 1
    if not ok(grid[hi]):
        raise Unattainable("no cutoff on the sigma grid satisfies the inequality")
    # L_1(v_sigma) is nonincreasing in sigma, so admissibility is monotone
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(grid[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(grid[lo])


def sigma_p(model: CouplingModel, p: float, C_Lambda: float, grid=None, x_grid=None) -> float:
    if p <= 0 or C_Lambda <= 0:
        raise ValueError("need p > 0 and C_Lambda > 0")
    rhs = min(1.0, math.sqrt(4 * C_Lambda))
    return _smallest_admissible(
        model, lambda s: 32 * math.sqrt(2 * p) * L_E(model.above(s), 1.0, x_grid) <= rhs, grid)


def varsigma_p(model: CouplingModel, p: float, grid=None, x_grid=None) -> float:
    if p <= 0:
        raise ValueError("need p > 0")
    return _smallest_admissible(
        model, lambda s: 16 * math.sqrt(p) * L_E(model.above(s), 1.0, x_grid) <= 1.0, grid)


@dataclass
class DressingVectors:
    """beta^{+-} (..., M) and alpha^{+-} (..., d, M) at the requested points."""
    sigma: float
    beta_plus: np.ndarray
    beta_minus: np.ndarray
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray


def dressing_factors(model: CouplingModel, sigma: float):
    """Per-mode factors chi_{lambda>=sigma}/(lambda -+ 1) for beta^+ and beta^-."""
    if sigma < 2:
        raise ValueError("dressing needs sigma >= 2")
    hi = model.lam >= sigma
    lam = model.lam
    fp = np.where(hi, 1.0 / np.where(hi, lam - 1.0, 1.0), 0.0)
    fm = np.where(hi, 1.0 / (lam + 1.0), 0.0)
    return fp, fm


def dressing(model: CouplingModel, sigma: float, x) -> DressingVectors:
    fp, fm = dressing_factors(model, sigma)
    v = model.v(x)
    gv = model.grad_v(x)
    return DressingVectors(sigma, v * fp, v * fm, gv * fp, gv * fm)


def g_sigma(model: CouplingModel, sigma: float, x_grid=None) -> float:
    """max of the grid sups of |beta^{+-}| and of the gradient norms."""
    xs = model.default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    dv = dressing(model, sigma, xs)
    vals = [np.linalg.norm(dv.beta_plus, axis=-1).max(), np.linalg.norm(dv.beta_minus, axis=-1).max(),
            np.sqrt(np.sum(np.abs(dv.alpha_plus) ** 2, axis=(-2, -1))).max(),
            np.sqrt(np.sum(np.abs(dv.alpha_minus) ** 2, axis=(-2, -1))).max()]
    return float(max(vals))


def sup_norm(model: CouplingModel, x_grid=None) -> float:
    """Grid sup of |v_x|."""
    xs = model.default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    return float(np.linalg.norm(model.v(xs), axis=-1).max())


# ------------------------------------------------------------ green kernel

def rectangle_green(L, y, z, n_terms: int = 200) -> float:
    """Dirichlet Green function of -Delta on the rectangle via a one-dimensional series.

    Expands in sin(n pi y1 / L1) and solves the transverse problem
    (-d^2 + k^2) g = delta in closed form; converges exponentially when y2 != z2.
    """
    L1, L2 = float(L[0]), float(L[1])
    y1, y2 = y
    z1, z2 = z
    lo, hi = min(y2, z2), max(y2, z2)
    total = 0.0
    for n in range(1, n_terms + 1):
        k = n * math.pi / L1
        # sinh(k lo) sinh(k (L2 - hi)) / (k sinh(k L2)), written to avoid overflow
        g = (math.exp(k * (lo - hi)) * (1 - math.exp(-2 * k * lo)) * (1 - math.exp(-2 * k * (L2 - hi)))
             / (2 * k * (1 - math.exp(-2 * k * L2))))
        total += (2 / L1) * math.sin(k * y1) * math.sin(k * z1) * g
    return total


def green_eigensum(L, y, z, n_modes: int) -> float:
    """sum over the ``n_modes`` lowest Dirichlet modes of phi(y) phi(z) / (2 lambda)."""
    model = ConfinedCoupling(L=L, modes=ConfinedCoupling.lowest_modes(L, n_modes), g=1.0)
    py = model.eigenfunctions(np.asarray(y, dtype=float))
    pz = model.eigenfunctions(np.asarray(z, dtype=float))
    return float(np.sum(py * pz / (2 * model.lam)))
