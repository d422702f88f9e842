"""Periodic vector-valued fields on [-pi, pi]: transforms, multipliers, norms.

Basis convention, fixed once for the whole package:

    u(x) = (1/sqrt(2 pi)) * sum_{|k| <= N} uhat(k) e^{i k x},

with grid points x_m = -pi + 2 pi m / M.  Under this convention Parseval
reads  sum |uhat|^2 = (2 pi / M) sum_m |u(x_m)|^2  for band-limited data,
and the heat semigroup acts modewise as exp(-k^2 f(eps k) t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from schemelab.schemes import CutoffScheme

SQRT_2PI = np.sqrt(2.0 * np.pi)
REALITY_TOL = 1e-10


@dataclass(frozen=True)
class SpectralField:
    """Truncated Fourier coefficients of a real vector field.

    coeffs has shape (n, 2N+1), mode index ascending from -N to N.
    Reality requires coeffs[:, -k] = conj(coeffs[:, k]).
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[1] % 2 == 0:
            raise ValueError("coeffs must have shape (n, 2N+1)")
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @property
    def N(self) -> int:
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def reality_defect(self) -> float:
        return float(np.abs(self.coeffs - np.conj(self.coeffs[:, ::-1])).max())

    @staticmethod
    def zeros(n: int, N: int) -> "SpectralField":
        return SpectralField(np.zeros((n, 2 * N + 1), dtype=complex))


@dataclass(frozen=True)
class GridField:
    """Real values of a vector field on the uniform grid x_m = -pi + 2 pi m/M."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must have shape (n, M)")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    @property
    def x(self) -> np.ndarray:
        M = self.M
        return -np.pi + 2.0 * np.pi * np.arange(M) / M


def grid_points(M: int) -> np.ndarray:
    return -np.pi + 2.0 * np.pi * np.arange(M) / M


def eval_modes_on_grid(coeffs: np.ndarray, ks: np.ndarray, M: int) -> np.ndarray:
    """Evaluate sum_k coeffs[..., k] e^{i k x_m} at the M grid points, exactly.

    Works for any mode list (also |k| >= M) by folding modes modulo M with
    the phase (-1)^k coming from the -pi grid offset.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    ks = np.asarray(ks)
    signed = coeffs * np.where(ks % 2 == 0, 1.0, -1.0)
    flat = signed.reshape(-1, len(ks))
    D = np.zeros((flat.shape[0], M), dtype=complex)
    idx = np.mod(ks, M)
    for row in range(flat.shape[0]):
        np.add.at(D[row], idx, flat[row])
    vals = np.fft.ifft(D, axis=-1) * M
    return vals.reshape(coeffs.shape[:-1] + (M,))


def to_physical(field: SpectralField, M: int) -> GridField:
    """Evaluate a spectral field on the M-point grid (requires M >= 2N+1)."""
    if M < 2 * field.N + 1:
        raise ValueError(f"grid size {M} too small for max mode {field.N}")
    vals = eval_modes_on_grid(field.coeffs, field.modes, M) / SQRT_2PI
    defect = float(np.abs(vals.imag).max()) if vals.size else 0.0
    if defect > REALITY_TOL * max(1.0, float(np.abs(vals.real).max())):
        raise ValueError(f"field violates the reality constraint (defect {defect:.2e})")
    return GridField(vals.real)


def to_spectral(grid: GridField, N: int) -> SpectralField:
    """Recover modes -N..N from grid values (requires M >= 2N+1).

    The output satisfies the reality constraint exactly (enforced by
    Hermitian symmetrisation, which is a no-op up to rounding for real
    input).
    """
    M = grid.M
    if M < 2 * N + 1:
        raise ValueError(f"grid size {M} too small for requested max mode {N}")
    F = np.fft.fft(grid.values, axis=-1)
    ks = np.arange(-N, N + 1)
    coeffs = F[:, np.mod(ks, M)] * np.where(ks % 2 == 0, 1.0, -1.0)
    coeffs *= SQRT_2PI / M
    coeffs = 0.5 * (coeffs + np.conj(coeffs[:, ::-1]))
    return SpectralField(coeffs)


def apply_multiplier(field: SpectralField, m) -> SpectralField:
    """Scale the coefficients modewise; m is a callable k -> complex or an
    array aligned with field.modes."""
    ks = field.modes
    mult = np.asarray(m(ks) if callable(m) else m, dtype=complex)
    if mult.shape != ks.shape:
        raise ValueError("multiplier array does not match the mode range")
    return SpectralField(field.coeffs * mult)


def semigroup_apply(field: SpectralField, scheme: CutoffScheme, eps: float,
                    t: float) -> SpectralField:
    """Apply the approximated heat semigroup: mode k scales by e^{-k^2 f(eps k) t}."""
    if t < 0:
        raise ValueError("t must be >= 0")
    from schemelab.schemes import laplacian_multiplier

    lap = laplacian_multiplier(scheme, field.modes, eps)
    return SpectralField(field.coeffs * np.exp(lap * t))


def heat_kernel(scheme: CutoffScheme, eps: float, t: float, N: int,
                M: int) -> GridField:
    """The kernel the approximated semigroup convolves with, truncated at N:

        p_t(x) = (1/sqrt(2 pi)) sum_k e^{-t k^2 f(eps k)} e^{i k x}.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    from schemelab.schemes import laplacian_multiplier

    ks = np.arange(-N, N + 1)
    coeffs = np.exp(laplacian_multiplier(scheme, ks, eps) * t)
    return to_physical(SpectralField(coeffs[None, :].astype(complex)), M)


def sobolev_minus_alpha_norm(field: SpectralField, alpha: float) -> float:
    """Negative Sobolev norm ( sum_{j,k} (1+k^2)^{-alpha} |uhat_j(k)|^2 )^(1/2)."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    k = field.modes.astype(float)
    w = (1.0 + k * k) ** (-alpha)
    return float(np.sqrt((w * np.abs(field.coeffs) ** 2).sum()))


def _pair_distances(M: int) -> np.ndarray:
    # periodic distance associated with each index separation 0..M-1
    s = np.arange(M)
    d = 2.0 * np.pi * s / M
    return np.minimum(d, 2.0 * np.pi - d)


def holder_seminorm_estimate(grid: GridField, gamma: float, stride: int = 1) -> float:
    """sup |u(x)-u(y)| / dist(x,y)^gamma over grid pairs, periodic distance.

    Pairs are (x_i, x_j) with the start index i subsampled by ``stride`` and
    all separations kept, so refining the stride can only add pairs and the
    estimate is nondecreasing under refinement.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    u = grid.values
    M = grid.M
    dist = _pair_distances(M)
    best = 0.0
    idx = np.arange(M)
    for i in range(0, M, stride):
        diff = np.linalg.norm(u - u[:, i][:, None], axis=0)
        sep = (idx - i) % M
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(sep > 0, diff / dist[sep] ** gamma, 0.0)
        best = max(best, float(ratio.max()))
    return best


def grr_norm_estimate(grid: GridField, alpha: float, p: float) -> float:
    """Double-integral Hoelder estimator

        ( sum_{x != y} |u(x)-u(y)|^p / dist(x,y)^(alpha p + 2) * dx^2 )^(1/p)

    over all ordered grid pairs with the periodic distance.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    u = grid.values
    M = grid.M
    dx = 2.0 * np.pi / M
    dist = _pair_distances(M)
    total = 0.0
    for s in range(1, M):
        diff = np.linalg.norm(np.roll(u, -s, axis=1) - u, axis=0)
        total += float((diff ** p).sum()) / dist[s] ** (alpha * p + 2.0)
    return (total * dx * dx) ** (1.0 / p)


@dataclass(frozen=True)
class NormConfig:
    """Hoelder/weight exponents used by the experiment harness.

    Requires 1/3 < alpha_tilde <= alpha < alpha_star < 1/2.  The blow-up
    weights follow the convention beta = alpha + kappa/3 with
    kappa = 1/2 - alpha_star (and likewise for the tilde pair).
    """

    alpha: float = 0.46
    alpha_tilde: float = 0.34
    alpha_star: float = 0.48
    beta: float | None = None
    beta_tilde: float | None = None
    stride: int = 4

    def __post_init__(self):
        if not (1.0 / 3.0 < self.alpha_tilde <= self.alpha < self.alpha_star < 0.5):
            raise ValueError("need 1/3 < alpha_tilde <= alpha < alpha_star < 1/2")
        kappa = 0.5 - self.alpha_star
        if self.beta is None:
            object.__setattr__(self, "beta", self.alpha + kappa / 3.0)
        if self.beta_tilde is None:
            object.__setattr__(self, "beta_tilde", self.alpha_tilde + kappa / 3.0)
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def kappa(self) -> float:
        return 0.5 - self.alpha_star


# ---------------------------------------------------------------------------
# serialisation: component-major, mode-ascending; binary is little-endian
# float64 (re, im) pairs for spectral data, float64 values for grids
# ---------------------------------------------------------------------------

def save_spectral(field: SpectralField, path, fmt: str = "csv") -> None:
    if fmt == "csv":
        rows = []
        for j in range(field.n):
            for i, k in enumerate(field.modes):
                c = field.coeffs[j, i]
                rows.append(f"{j},{k},{float(c.real)!r},{float(c.imag)!r}")
        with open(path, "w") as fh:
            fh.write("component,mode,re,im\n")
            fh.write("\n".join(rows) + "\n")
    elif fmt == "bin":
        flat = np.empty((field.n, 2 * field.N + 1, 2), dtype="<f8")
        flat[:, :, 0] = field.coeffs.real
        flat[:, :, 1] = field.coeffs.imag
        flat.tofile(path)
    else:
        raise ValueError("fmt must be 'csv' or 'bin'")


def load_spectral(path, n: int, N: int, fmt: str = "csv") -> SpectralField:
    if fmt == "csv":
        coeffs = np.zeros((n, 2 * N + 1), dtype=complex)
        with open(path) as fh:
            next(fh)
            for line in fh:
                j, k, re, im = line.strip().split(",")
                coeffs[int(j), int(k) + N] = float(re) + 1j * float(im)
        return SpectralField(coeffs)
    if fmt == "bin":
        flat = np.fromfile(path, dtype="<f8").reshape(n, 2 * N + 1, 2)
        return SpectralField(flat[:, :, 0] + 1j * flat[:, :, 1])
    raise ValueError("fmt must be 'csv' or 'bin'")


def save_grid(grid: GridField, path, fmt: str = "csv") -> None:
    if fmt == "csv":
        np.savetxt(path, grid.values, delimiter=",")
    elif fmt == "bin":
        grid.values.astype("<f8").tofile(path)
    else:
        raise ValueError("fmt must be 'csv' or 'bin'")


def load_grid(path, n: int, M: int, fmt: str = "csv") -> GridField:
    if fmt == "csv":
        return GridField(np.loadtxt(path, delimiter=",").reshape(n, M))
    if fmt == "bin":
        return GridField(np.fromfile(path, dtype="<f8").reshape(n, M))
    raise ValueError("fmt must be 'csv' or 'bin'")
