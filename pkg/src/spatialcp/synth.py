"""Matérn Gaussian random fields and the synthetic benchmark scenarios."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.spatial.distance import pdist, squareform

from .core import Dataset, RngSpec
from .errors import CholeskyFailure, DomainError

__all__ = [
    "MaternParams",
    "ScenarioSpec",
    "bessel_k",
    "bessel_k_integral",
    "matern_cov",
    "matern_matrix",
    "sample_gp",
    "gen_scenario",
]

NU_RANGE = (0.05, 10.0)
X_RANGE = (1e-8, 100.0)


@dataclass(frozen=True)
class MaternParams:
    variance: float = 1.0
    range: float = 0.1
    smoothness: float = 0.7

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")
        if not self.range > 0:
            raise ValueError(f"range must be > 0, got {self.range}")
        if not self.smoothness > 0:
            raise ValueError(f"smoothness must be > 0, got {self.smoothness}")


def _check_domain(nu, x):
    nu_a, x_a = np.asarray(nu, dtype=float), np.asarray(x, dtype=float)
    if np.any(~((nu_a >= NU_RANGE[0]) & (nu_a <= NU_RANGE[1]))):
        raise DomainError(f"order must lie in [{NU_RANGE[0]}, {NU_RANGE[1]}]")
    if np.any(~((x_a >= X_RANGE[0]) & (x_a <= X_RANGE[1]))):
        raise DomainError(f"argument must lie in [{X_RANGE[0]:g}, {X_RANGE[1]:g}]")
    return nu_a, x_a


def bessel_k(nu, x):
    """Modified Bessel function of the second kind, K_nu(x).

    Fast path backed by the AMOS routines in :mod:`scipy.special`. Accepts
    scalars or broadcastable arrays inside the supported domain
    ``0.05 <= nu <= 10``, ``1e-8 <= x <= 100``.
    """
    nu_a, x_a = _check_domain(nu, x)
    out = special.kv(nu_a, x_a)
    return float(out) if out.ndim == 0 else out


def _log_integrand(t, nu, x):
    # log of exp(-x (cosh t - 1)) cosh(nu t), stable for large t
    nt = nu * t
    with np.errstate(over="ignore"):
        return -x * (np.cosh(t) - 1.0) + nt + np.log1p(np.exp(-2.0 * nt)) - math.log(2.0)


def _k_integral_scalar(nu: float, x: float, rtol: float = 1e-14) -> float:
    # K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt. The integrand is
    # even and analytic, so the trapezoid rule converges geometrically;
    # the step is halved until successive sums agree.
    t = np.arange(0.0, 700.0, 0.05)
    g = _log_integrand(t, nu, x)
    gmax = float(g.max())
    past_peak = (g < gmax - 46.0) & (t > t[int(np.argmax(g))])
    upper = float(t[np.argmax(past_peak)]) if past_peak.any() else float(t[-1])
    n_pts = 64
    prev = None
    while True:
        tt = np.linspace(0.0, upper, n_pts + 1)
        w = np.exp(_log_integrand(tt, nu, x) - gmax)
        h = upper / n_pts
        total = h * (w.sum() - 0.5 * w[0] - 0.5 * w[-1])
        if prev is not None and abs(total - prev) <= rtol * abs(total):
            break
        if n_pts >= 2**22:
            break
        prev = total
        n_pts *= 2
    return float(math.exp(gmax - x) * total)


def bessel_k_integral(nu, x):
    """Reference K_nu(x) by quadrature of the integral representation.

    Independent of :func:`bessel_k`; slow, intended for cross-checks.
    """
    nu_a, x_a = _check_domain(nu, x)
    out = np.vectorize(_k_integral_scalar, otypes=[float])(nu_a, x_a)
    return float(out) if out.ndim == 0 else out


def matern_cov(dist, p: MaternParams):
    """Matérn covariance at lag ``dist``.

    ``C(d) = var * 2**(1-kappa) / Gamma(kappa) * (d/range)**kappa * K_kappa(d/range)``
    with ``C(0) = var``.
    """
    d = np.asarray(dist, dtype=float)
    if not np.isfinite(d).all():
        raise ValueError("distances must be finite")
    d = np.abs(d)
    kappa = p.smoothness
    u = d / p.range
    out = np.full(d.shape, float(p.variance))
    pos = u > 1e-12
    if np.any(pos):
        up = u[pos]
        # kve(k, u) = kv(k, u) * exp(u); assemble in log space to avoid overflow/underflow
        log_c = (1.0 - kappa) * math.log(2.0) - special.gammaln(kappa) + kappa * np.log(up) - up
        out[pos] = p.variance * np.exp(log_c) * special.kve(kappa, up)
    return float(out) if out.ndim == 0 else out


def matern_matrix(sites, p: MaternParams) -> np.ndarray:
    pts = np.array(sites, dtype=float, ndmin=2)
    n = len(pts)
    if n == 1:
        return np.array([[float(p.variance)]])
    cov = squareform(matern_cov(pdist(pts), p))
    np.fill_diagonal(cov, p.variance)
    return cov


def _jittered_cholesky(cov: np.ndarray, variance: float) -> np.ndarray:
    jitter = 1e-10 * variance
    for _ in range(6):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(len(cov)))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CholeskyFailure(f"covariance not positive definite even with jitter {jitter / 10:.1e}")


def matern_cholesky(sites, p: MaternParams) -> np.ndarray:
    """Lower Cholesky factor of the Matérn covariance over ``sites``."""
    n = len(np.atleast_2d(sites))
    if n > 20000:
        raise ValueError(f"dense sampling is limited to 20000 sites, got {n}")
    if p.variance == 0:
        return np.zeros((n, n))
    return _jittered_cholesky(matern_matrix(sites, p), p.variance)


def sample_gp(sites, p: MaternParams, rng: RngSpec, chol: np.ndarray | None = None) -> np.ndarray:
    """One mean-zero draw of a Matérn Gaussian process at ``sites``.

    ``chol`` may carry a precomputed :func:`matern_cholesky` factor for the
    same sites and parameters.
    """
    pts = np.array(sites, dtype=float, ndmin=2)
    n = len(pts)
    if p.variance == 0:
        return np.zeros(n)
    L = matern_cholesky(pts, p) if chol is None else chol
    return L @ rng.generator().standard_normal(n)


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    n: int
    x_params: MaternParams = field(default_factory=MaternParams)
    eps_params: MaternParams = field(default_factory=MaternParams)
    rng: RngSpec = field(default_factory=lambda: RngSpec(0))

    def __post_init__(self):
        if self.id not in (1, 2, 3):
            raise ValueError(f"scenario id must be 1, 2 or 3, got {self.id}")
        if self.n < 20:
            raise ValueError(f"scenario needs n >= 20, got {self.n}")


def scenario_response(scenario: int, x, eps, sites) -> np.ndarray:
    if scenario == 1:
        return x + eps
    if scenario == 2:
        return x * np.abs(eps)
    if scenario == 3:
        return x + np.sin(np.linalg.norm(sites, axis=1)) * eps
    raise ValueError(f"unknown scenario {scenario}")


def gen_scenario(spec: ScenarioSpec, return_fields: bool = False):
    """Draw one synthetic dataset.

    Sites are uniform on the unit square; the covariate field X and the
    noise field eps are independent Matérn processes. Features are
    ``(X(s), s_1, s_2)``.

    Returns the :class:`Dataset`, or ``(dataset, x, eps)`` when
    ``return_fields`` is set.
    """
    gen = spec.rng.child("sites").generator()
    sites = gen.uniform(0.0, 1.0, size=(spec.n, 2))
    chol_x = matern_cholesky(sites, spec.x_params)
    chol_e = chol_x if spec.eps_params == spec.x_params else matern_cholesky(sites, spec.eps_params)
    x = sample_gp(sites, spec.x_params, spec.rng.child("gp", "x"), chol=chol_x)
    eps = sample_gp(sites, spec.eps_params, spec.rng.child("gp", "eps"), chol=chol_e)
    y = scenario_response(spec.id, x, eps, sites)
    data = Dataset(sites, np.column_stack([x, sites]), y)
    return (data, x, eps) if return_fields else data
