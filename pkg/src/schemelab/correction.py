"""Correction constant of a scheme, its finite-eps approximations, and the
corrected drift.

The constant is

    Lambda = (1/(2 pi nu)) int_0^inf int_R (1 - cos(y t)) h(t)^2 / (t^2 f(t)) mu(dy) dt.

For f = h = 1 it collapses to (1/(4 nu)) int |y| mu(dy); that closed form is
kept as a test oracle only.  The finite-eps quantity

    Lambda_{z,eps}(t) = (1/eps) sum_k (q_eps^k)^2 K_k(t) (1 - cos(k eps z)),

with q_eps^k = h(eps k) / (|k| sqrt(4 pi f(eps k))) and
K_k(t) = 1 - exp(-2 k^2 f(eps k) t), is the mean of the scaled symmetric
second-order increment of the Gaussian reference field over a shift eps z;
integrating it against mu gives Lambda_eps(t), which converges to Lambda.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from schemelab.schemes import CutoffScheme


class QuadratureError(RuntimeError):
    """Quadrature failed to reach the requested tolerance within budget.

    Carries the partial value and the error estimate accumulated so far.
    """

    def __init__(self, message, partial_value, error_estimate, evaluations):
        super().__init__(message)
        self.partial_value = partial_value
        self.error_estimate = error_estimate
        self.evaluations = evaluations


@dataclass(frozen=True)
class LambdaResult:
    value: float
    error_estimate: float
    evaluations: int


def _lambda_single_atom(z: float, f, h, limit: int, tol: float):
    """int_0^inf (1 - cos(z t)) h^2(t) / (t^2 f(t)) dt for one shift z > 0 or < 0.

    Strategy: a plain adaptive pass on [0, T] where the oscillation is slow,
    then the tail split into the non-oscillatory part int w(t)/t^2 dt
    (computed via the substitution u = 1/t) and the Fourier-type part
    int cos(z t) w(t)/t^2 dt (computed with a cosine-weighted rule), where
    w = h^2/f.  The integrand is extended continuously at 0 by z^2 w(0)/2.
    """
    evals = 0
    epsabs = max(tol / 8.0, 1e-13)

    def w(t):
        nonlocal evals
        evals += 1
        return float(h(t)) ** 2 / float(f(t))

    def head(t):
        if t == 0.0:
            return 0.5 * z * z * w(0.0)
        return (1.0 - np.cos(z * t)) * w(t) / (t * t)

    T = max(20.0, 40.0 / abs(z))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        head_val, head_err = integrate.quad(head, 0.0, T, limit=limit,
                                            epsabs=epsabs)
        flat_val, flat_err = integrate.quad(lambda u: w(1.0 / u), 0.0, 1.0 / T,
                                            limit=limit, epsabs=epsabs)
        osc_val, osc_err = integrate.quad(lambda t: w(t) / (t * t), T, np.inf,
                                          weight="cos", wvar=z, limit=limit,
                                          epsabs=epsabs)
    return head_val + flat_val - osc_val, head_err + flat_err + osc_err, evals


def lambda_integral(atoms, f, h, nu: float = 1.0, tol: float = 1e-9,
                    limit: int = 400) -> LambdaResult:
    """Raw correction integral for an explicit atom list (no scheme validation)."""
    total, err, evals = 0.0, 0.0, 0
    for z, weight in atoms:
        if z == 0.0 or weight == 0.0:
            continue
        v, e, n = _lambda_single_atom(float(z), f, h, limit, tol)
        total += weight * v
        err += abs(weight) * e
        evals += n
    value = total / (2.0 * np.pi * nu)
    error = err / (2.0 * np.pi * nu)
    if error > tol:
        raise QuadratureError(
            f"quadrature error estimate {error:.3e} exceeds tolerance {tol:.3e}",
            partial_value=value, error_estimate=error, evaluations=evals,
        )
    return LambdaResult(value=value, error_estimate=error, evaluations=evals)


def lambda_exact(scheme: CutoffScheme, nu: float = 1.0, tol: float = 1e-9,
                 limit: int = 400) -> LambdaResult:
    """Correction constant of the scheme by adaptive quadrature.

    The caller is expected to have validated the scheme; the integral is
    evaluated as given.  Raises QuadratureError (carrying the partial value)
    if the error estimate cannot be brought below ``tol`` within the
    subdivision budget.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    return lambda_integral(scheme.mu.atoms, scheme.f, scheme.h, nu=nu,
                           tol=tol, limit=limit)


def mode_kernel_weights(scheme: CutoffScheme, eps: float, N: int) -> np.ndarray:
    """(q_eps^k)^2 for k = 0..N under the package normalisation."""
    k = np.arange(N + 1, dtype=float)
    q2 = np.empty(N + 1)
    q2[0] = 1.0 / (2.0 * np.pi)
    kk = k[1:]
    q2[1:] = scheme.h(eps * kk) ** 2 / (kk * kk * 4.0 * np.pi * scheme.f(eps * kk))
    return q2


def lambda_z_eps(scheme: CutoffScheme, z: float, eps: float, t: float,
                 N: int) -> float:
    """Finite-eps correction density at shift z (mode sum truncated at N).

    Equals the expected scaled symmetric second-order increment of the
    Gaussian reference field over the shift eps*z at time t; nonnegative,
    even in z, and vanishing at z = 0 and t = 0.
    """
    if eps <= 0 or t <= 0:
        raise ValueError("eps and t must be > 0")
    if N < 1:
        raise ValueError("N must be >= 1")
    k = np.arange(1, N + 1, dtype=float)
    q2 = mode_kernel_weights(scheme, eps, N)[1:]
    K = 1.0 - np.exp(-2.0 * scheme.f(eps * k) * k * k * t)
    terms = q2 * K * (1.0 - np.cos(k * eps * z))
    # the k = 0 term vanishes identically; negative modes double the sum
    return float(2.0 * terms.sum() / eps)


def lambda_z_tail_bound(scheme: CutoffScheme, eps: float, N: int) -> float:
    """Crude bound on the neglected |k| > N part: sum_{|k|>N} (q^k)^2 / eps."""
    sup_h = float(np.abs(scheme.h(eps * np.arange(N, 4 * N + 1))).max())
    inf_f = float(np.abs(scheme.f(eps * np.arange(N, 4 * N + 1))).min())
    inf_f = max(inf_f, 2.0 * scheme.c_f)
    return 2.0 * sup_h ** 2 / (4.0 * np.pi * inf_f * N * eps)


def lambda_eps(scheme: CutoffScheme, eps: float, t: float, N: int) -> float:
    """Finite-eps correction constant: the mu-integral of lambda_z_eps."""
    return float(sum(w * lambda_z_eps(scheme, z, eps, t, N)
                     for z, w in scheme.mu.atoms if z != 0.0 and w != 0.0))


def corrected_drift(F_eval, G_jacobian_eval, theta_eval, Lambda: float,
                    u: np.ndarray) -> np.ndarray:
    """Corrected drift F_bar(u) = F(u) - Lambda * theta^j_k dG^i_l/du_j theta^l_k.

    ``G_jacobian_eval(u)`` must return the array DG with DG[j, i, l] equal to
    the derivative of G^i_l in the j-th state direction; ``theta_eval(u)``
    returns theta with rows indexing the state component and columns the
    noise channel.  Repeated indices j, k, l are summed.
    """
    u = np.asarray(u, dtype=float)
    F = np.asarray(F_eval(u), dtype=float)
    DG = np.asarray(G_jacobian_eval(u), dtype=float)
    theta = np.asarray(theta_eval(u), dtype=float)
    n = u.shape[0]
    if F.shape != (n,) or DG.shape != (n, n, n) or theta.shape != (n, n):
        raise ValueError("model callables returned arrays of the wrong shape")
    tt = theta @ theta.T
    corr = np.einsum("jil,jl->i", DG, tt)
    return F - Lambda * corr
