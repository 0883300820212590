"""Discrete sample paths of Holder-continuous Gaussian drivers.

Supported drivers: standard Brownian motion, fractional Brownian motion
(fBm), multifractional Brownian motion (mBm) with a time-varying Hurst
function, and arbitrary user-supplied covariance kernels. Paths are
generated on uniform grids either by Cholesky factorization of the
covariance matrix or, for fBm, by circulant embedding of the increment
covariance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as _gamma_fn

__all__ = [
    "TimeGrid",
    "GaussianDriverSpec",
    "NoisePath",
    "brownian",
    "fbm",
    "mbm",
    "mbm_sin",
    "custom",
    "fbm_covariance",
    "mbm_covariance",
    "covariance_matrix",
    "sample_path",
    "sample_path_fast_fbm",
    "generate_noise",
    "holder_constant",
    "restrict_to_coarse",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition 0 = t_0 < t_1 < ... < t_n = T."""

    horizon: float
    n: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.n < 1:
            raise ValueError("need at least one step")

    @property
    def delta(self) -> float:
        return self.horizon / self.n

    @cached_property
    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n + 1)


@dataclass(frozen=True)
class GaussianDriverSpec:
    """A centered Gaussian driver identified by its covariance on grids.

    ``cache_key`` identifies specs whose covariance factorization may be
    reused across paths; it is None for specs built around raw callables.
    """

    kind: str  # "brownian" | "fbm" | "mbm" | "custom"
    hurst: Optional[float] = None
    hurst_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    cov: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    holder_exponent_hint: Optional[float] = None
    cache_key: Optional[tuple] = field(default=None, compare=False)

    def holder_exponent(self, grid: Optional[TimeGrid] = None) -> float:
        """Default Holder exponent: slightly below the (minimal) Hurst index."""
        if self.holder_exponent_hint is not None:
            return self.holder_exponent_hint
        if self.kind == "brownian":
            return 0.49
        if self.kind == "fbm":
            return self.hurst - 0.01
        if self.kind == "mbm":
            if grid is None:
                raise ValueError("mbm needs a grid to locate the minimal Hurst value")
            return float(np.min(self.hurst_fn(grid.points))) - 0.01
        raise ValueError("no default Holder exponent for custom drivers; pass a hint")


@dataclass(frozen=True)
class NoisePath:
    """Driver values Z(t_k) on a grid, with Z(0) = 0."""

    grid: TimeGrid
    values: np.ndarray
    seed: int
    spec: GaussianDriverSpec

    def __post_init__(self):
        if len(self.values) != self.grid.n + 1:
            raise ValueError("values length must equal number of grid points")
        if self.values[0] != 0.0:
            raise ValueError("driver paths must start at zero")

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def brownian() -> GaussianDriverSpec:
    return GaussianDriverSpec(kind="brownian", hurst=0.5, cache_key=("brownian",))


def fbm(hurst: float) -> GaussianDriverSpec:
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"Hurst index must lie in (0,1), got {hurst}")
    return GaussianDriverSpec(kind="fbm", hurst=hurst, cache_key=("fbm", hurst))


def mbm(hurst_fn: Callable[[np.ndarray], np.ndarray]) -> GaussianDriverSpec:
    return GaussianDriverSpec(kind="mbm", hurst_fn=hurst_fn)


def mbm_sin(a: float, b: float, c: float) -> GaussianDriverSpec:
    """mBm with the built-in Hurst shape H(t) = a + b*sin(c*t)."""
    return GaussianDriverSpec(
        kind="mbm",
        hurst_fn=lambda t: a + b * np.sin(c * t),
        cache_key=("mbm_sin", a, b, c),
    )


def custom(cov: Callable[[np.ndarray, np.ndarray], np.ndarray],
           holder_exponent_hint: float) -> GaussianDriverSpec:
    return GaussianDriverSpec(kind="custom", cov=cov,
                              holder_exponent_hint=holder_exponent_hint)


def fbm_covariance(s, t, hurst: float):
    """Covariance of fBm: (t^2H + s^2H - |t-s|^2H) / 2."""
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"Hurst index must lie in (0,1), got {hurst}")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * hurst
    out = 0.5 * (np.abs(t) ** h2 + np.abs(s) ** h2 - np.abs(t - s) ** h2)
    return out if out.ndim else float(out)


def _mbm_scale(a, b):
    # Normalization making the variance at time 1 equal to 1 when a == b,
    # so the constant-H case degenerates exactly to fBm.
    num = np.sqrt(_gamma_fn(2 * a + 1) * _gamma_fn(2 * b + 1)
                  * np.sin(np.pi * a) * np.sin(np.pi * b))
    den = 2.0 * _gamma_fn(a + b + 1) * np.sin(np.pi * (a + b) / 2.0)
    return num / den


def mbm_covariance(s, t, hs, ht):
    """Covariance of harmonizable mBm between times s, t with Hurst hs, ht."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    hsum = np.asarray(hs, dtype=float) + np.asarray(ht, dtype=float)
    out = _mbm_scale(np.asarray(hs, dtype=float), np.asarray(ht, dtype=float)) * (
        np.abs(s) ** hsum + np.abs(t) ** hsum - np.abs(t - s) ** hsum
    )
    return out if out.ndim else float(out)


def covariance_matrix(spec: GaussianDriverSpec, grid: TimeGrid) -> np.ndarray:
    """Covariance of (Z(t_1), ..., Z(t_n)); t_0 is excluded since Z(0) = 0."""
    t = grid.points[1:]
    if spec.kind == "brownian":
        return np.minimum.outer(t, t)
    if spec.kind == "fbm":
        return fbm_covariance(t[:, None], t[None, :], spec.hurst)
    if spec.kind == "mbm":
        h = np.asarray(spec.hurst_fn(t), dtype=float)
        if np.any(h <= 0.0) or np.any(h >= 1.0):
            raise ValueError("mbm Hurst function must take values in (0,1) on the grid")
        cov = mbm_covariance(t[:, None], t[None, :], h[:, None], h[None, :])
        return 0.5 * (cov + cov.T)  # exact symmetry despite rounding
    if spec.kind == "custom":
        return np.asarray(spec.cov(t[:, None], t[None, :]), dtype=float)
    raise ValueError(f"unknown driver kind {spec.kind!r}")


class CholeskyError(RuntimeError):
    pass


_MAX_JITTER_DOUBLINGS = 8
_factor_cache: dict = {}


def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    jitter = 1e-12 * np.trace(cov) / cov.shape[0]
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    for _ in range(_MAX_JITTER_DOUBLINGS):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 2.0
    smallest = float(np.min(np.linalg.eigvalsh(cov)))
    raise CholeskyError(
        f"covariance matrix is not positive definite after jitter; "
        f"smallest eigenvalue estimate {smallest:.3e}"
    )


def _brownian_like_factor(grid: TimeGrid) -> np.ndarray:
    # Exact Cholesky factor of min(s,t) on a uniform grid.
    n = grid.n
    return np.tril(np.full((n, n), np.sqrt(grid.delta)))


def _factor_for(spec: GaussianDriverSpec, grid: TimeGrid) -> np.ndarray:
    key = None
    if spec.cache_key is not None:
        key = (spec.cache_key, grid.horizon, grid.n)
        cached = _factor_cache.get(key)
        if cached is not None:
            return cached
    if spec.kind == "brownian" or (spec.kind == "fbm" and spec.hurst == 0.5):
        factor = _brownian_like_factor(grid)
    else:
        factor = _cholesky_with_jitter(covariance_matrix(spec, grid))
    if key is not None:
        _factor_cache[key] = factor
    return factor


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def sample_path(spec: GaussianDriverSpec, grid: TimeGrid, seed: int) -> NoisePath:
    """Sample the driver on the grid via the covariance Cholesky factor.

    The sample has the exact joint Gaussian law of the driver restricted
    to the grid and is deterministic given (spec, grid, seed).
    """
    factor = _factor_for(spec, grid)
    xi = _rng(seed).standard_normal(grid.n)
    values = np.empty(grid.n + 1)
    values[0] = 0.0
    values[1:] = factor @ xi
    return NoisePath(grid=grid, values=values, seed=seed, spec=spec)


def _fgn_circulant_eigs(n: int, hurst: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * hurst
    rho = 0.5 * ((k + 1.0) ** h2 + np.abs(k - 1.0) ** h2) - k ** h2
    circ = np.concatenate([rho[:-1], [0.0], rho[-2:0:-1]])
    return np.fft.fft(circ).real


def sample_path_fast_fbm(hurst: float, grid: TimeGrid, seed: int) -> NoisePath:
    """Sample fBm on the grid by circulant embedding of the fGn covariance.

    Exact in law and O(N log N); falls back to the Cholesky route with a
    warning if the embedding produces a negative eigenvalue.
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"Hurst index must lie in (0,1), got {hurst}")
    n = grid.n
    eigs = _fgn_circulant_eigs(n, hurst)
    if np.min(eigs) < 0.0:
        warnings.warn(
            "circulant embedding has a negative eigenvalue; "
            "falling back to Cholesky sampling"
        )
        return sample_path(fbm(hurst), grid, seed)
    rng = _rng(seed)
    z = np.zeros(2 * n, dtype=complex)
    z[0] = rng.standard_normal()
    z[n] = rng.standard_normal()
    v = rng.standard_normal((n - 1, 2))
    z[1:n] = (v[:, 0] + 1j * v[:, 1]) / np.sqrt(2.0)
    z[n + 1:] = np.conj(z[1:n][::-1])
    fgn = np.sqrt(2 * n) * np.fft.ifft(np.sqrt(eigs) * z).real[:n]
    increments = fgn * grid.delta ** hurst
    values = np.empty(n + 1)
    values[0] = 0.0
    np.cumsum(increments, out=values[1:])
    return NoisePath(grid=grid, values=values, seed=seed,
                     spec=fbm(hurst) if hurst != 0.5 else brownian())


def generate_noise(spec: GaussianDriverSpec, grid: TimeGrid, seed: int,
                   method: str = "auto") -> NoisePath:
    """Dispatch to the fast fBm sampler when possible, Cholesky otherwise."""
    if method not in ("auto", "cholesky", "circulant"):
        raise ValueError(f"unknown sampling method {method!r}")
    if method == "cholesky":
        return sample_path(spec, grid, seed)
    if method == "circulant" or spec.kind in ("brownian", "fbm"):
        hurst = 0.5 if spec.kind == "brownian" else spec.hurst
        return sample_path_fast_fbm(hurst, grid, seed)
    return sample_path(spec, grid, seed)


def holder_constant(path: NoisePath, lam: float, lags: str = "auto") -> float:
    """Discrete Holder-constant estimate max |Z(t_n)-Z(t_k)| / (t_n-t_k)^lam.

    ``lags="all"`` scans every grid pair; ``"dyadic"`` restricts to
    power-of-two gaps (a lower bound for the full-pair maximum) and is
    the automatic choice above 4096 steps, flagged with a warning.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("Holder exponent must lie in (0,1)")
    z = path.values
    n = path.grid.n
    delta = path.grid.delta
    if lags == "auto":
        lags = "all" if n <= 4096 else "dyadic"
        if lags == "dyadic":
            warnings.warn(
                "holder_constant: using dyadic gap restriction for a grid "
                "with more than 4096 steps; the result is a lower bound "
                "for the full-pair maximum"
            )
    if lags == "all":
        gaps = range(1, n + 1)
    elif lags == "dyadic":
        gaps = sorted({min(2 ** j, n) for j in range(n.bit_length())})
    else:
        raise ValueError(f"unknown lag mode {lags!r}")
    best = 0.0
    for gap in gaps:
        step = np.max(np.abs(z[gap:] - z[:-gap])) / (gap * delta) ** lam
        if step > best:
            best = float(step)
    return best


def restrict_to_coarse(path: NoisePath, factor: int) -> NoisePath:
    """Subsample the path onto the coarse grid with n/factor steps."""
    if factor < 1:
        raise ValueError("factor must be a positive integer")
    if path.grid.n % factor != 0:
        raise ValueError(f"factor {factor} does not divide {path.grid.n} steps")
    coarse = TimeGrid(horizon=path.grid.horizon, n=path.grid.n // factor)
    return replace(path, grid=coarse, values=path.values[::factor].copy())
