"""Drift-implicit (backward) Euler stepping for sandwiched SDEs.

Each step solves y - b(t_next, y) * delta = z for the next state, where
z = Y_prev + dZ. The map on the left is strictly increasing under the
mesh condition c3 * delta < 1 and diverges at the barriers, so the step
has a unique in-domain solution and the scheme preserves the sandwich.
Closed forms exist for the CIR family (quadratic) and the TSB family
(cubic via Cardano); everything else goes through a bracketed,
safeguarded Newton solve.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ONE_SIDED, TWO_SIDED, DriftSpec, SandwichConfig, max_mesh
from .noise import NoisePath, TimeGrid

__all__ = [
    "ImplicitStepEquation",
    "SimulatedPath",
    "SandwichReport",
    "StepError",
    "implicit_step_cir",
    "tsb_coefficients",
    "cardano_solve",
    "implicit_step_tsb",
    "implicit_step_generic",
    "simulate",
    "check_sandwich",
]

DEFAULT_TOL = 1e-12


class StepError(RuntimeError):
    """An implicit step could not be solved to tolerance."""


@dataclass(frozen=True)
class ImplicitStepEquation:
    """One implicit equation y - b(t_next, y) * delta = rhs."""

    t_next: float
    delta: float
    rhs: float
    drift: DriftSpec


@dataclass(frozen=True)
class SimulatedPath:
    """Grid values of the backward Euler approximation.

    Between grid points the approximation is extended piecewise
    constantly: Y(t) = Y(t_k) for t in [t_k, t_{k+1}).
    """

    grid: TimeGrid
    values: np.ndarray
    noise_seed: int
    stepper: str
    residuals: np.ndarray


@dataclass(frozen=True)
class SandwichReport:
    strict_ok: bool
    violations: tuple
    envelope_ok: Optional[bool]
    envelope_violations: tuple
    lam_hat: Optional[float]


def implicit_step_cir(y_prev: float, delta: float, dz: float,
                      kappa1: float, kappa2: float) -> float:
    """Closed-form implicit step for the CIR drift with gamma = 1.

    Solves y = z + (kappa1/y - kappa2*y)*delta for the unique positive
    root; the discriminant is positive for any z when kappa1 > 0.
    """
    z = y_prev + dz
    scale = 1.0 + kappa2 * delta
    return (z + math.sqrt(z * z + 4.0 * kappa1 * delta * scale)) / (2.0 * scale)


def tsb_coefficients(y_prev: float, dz: float, delta: float,
                     kappa1: float, kappa2: float, kappa3: float,
                     phi_next: float, psi_next: float) -> tuple:
    """Monic cubic coefficients (B2, B1, B0) of the implicit TSB step."""
    scale = 1.0 + delta * kappa3
    if scale <= 0.0:
        raise StepError(f"mesh too coarse for kappa3={kappa3}: 1 + delta*kappa3 <= 0")
    z = y_prev + dz
    b0 = (-phi_next * psi_next * z
          + delta * (kappa1 * psi_next + kappa2 * phi_next)) / scale
    b1 = phi_next * psi_next \
        + ((phi_next + psi_next) * z - delta * (kappa1 + kappa2)) / scale
    b2 = -phi_next - psi_next - z / scale
    return b2, b1, b0


def cardano_solve(b2: float, b1: float, b0: float) -> tuple:
    """Three complex roots of y^3 + b2*y^2 + b1*y + b0 = 0 (Cardano).

    The depressed cubic u^3 + q1*u + q2 = 0 (y = u - b2/3) is solved in
    trigonometric form when all roots are real and via paired complex
    cube roots otherwise.
    """
    q1 = b1 - b2 * b2 / 3.0
    q2 = 2.0 * b2 ** 3 / 27.0 - b2 * b1 / 3.0 + b0
    disc = (q1 / 3.0) ** 3 + (q2 / 2.0) ** 2
    shift = b2 / 3.0
    if q1 == 0.0 and q2 == 0.0:
        u = (0.0 + 0.0j, 0.0 + 0.0j, 0.0 + 0.0j)
    elif disc < 0.0:
        # Three distinct real roots; trigonometric form avoids complex
        # round-trip error.
        rho = 2.0 * math.sqrt(-q1 / 3.0)
        arg = 3.0 * q2 / (q1 * rho)
        theta = math.acos(min(1.0, max(-1.0, arg)))
        u = tuple(complex(rho * math.cos((theta - 2.0 * math.pi * k) / 3.0))
                  for k in range(3))
    else:
        sqrt_disc = math.sqrt(disc)
        alpha = _cbrt(-q2 / 2.0 + sqrt_disc)
        # Pick the cube-root branch of beta with alpha*beta = -q1/3.
        if abs(alpha) > 0.0:
            beta = (-q1 / 3.0) / alpha
        else:
            beta = _cbrt(-q2 / 2.0 - sqrt_disc)
        s, d = alpha + beta, alpha - beta
        u = (s,
             -s / 2.0 + 1j * math.sqrt(3.0) / 2.0 * d,
             -s / 2.0 - 1j * math.sqrt(3.0) / 2.0 * d)
    return tuple(r - shift for r in u)


def _cbrt(x: float) -> complex:
    return complex(math.copysign(abs(x) ** (1.0 / 3.0), x))


_REAL_ROOT_TOL = 1e-9


def implicit_step_tsb(eq: ImplicitStepEquation) -> float:
    """Implicit TSB step: the unique cubic root inside (phi, psi)."""
    drift = eq.drift
    params = drift.param_dict
    phi_next = float(drift.bounds.phi(eq.t_next))
    psi_next = float(drift.bounds.psi(eq.t_next))
    b2, b1, b0 = tsb_coefficients(
        0.0, eq.rhs, eq.delta,
        params["kappa1"], params["kappa2"], params["kappa3"],
        phi_next, psi_next)
    roots = cardano_solve(b2, b1, b0)
    inside = [r.real for r in roots
              if abs(r.imag) <= _REAL_ROOT_TOL * (1.0 + abs(r.real))
              and phi_next < r.real < psi_next]
    if len(inside) != 1:
        raise StepError(
            f"expected exactly one real root in ({phi_next}, {psi_next}), "
            f"found {len(inside)} among {roots}; mesh condition likely violated")
    return inside[0]


_BRACKET_BUDGET = 64


def implicit_step_generic(eq: ImplicitStepEquation,
                          tol: float = DEFAULT_TOL) -> float:
    """Solve the implicit step by bracketing plus safeguarded Newton.

    g(y) = y - b(t, y)*delta is strictly increasing, tends to -inf at
    phi(t)+ and to +inf at psi(t)- (two-sided) or as y -> inf, so a sign
    change bracket always exists; Newton accelerates inside it and falls
    back to bisection whenever it leaves the bracket.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    drift = eq.drift
    t, delta, z = eq.t_next, eq.delta, eq.rhs

    def g(y):
        return y - drift.b(t, y) * delta

    phi_t = float(drift.bounds.phi(t))
    if drift.kind == TWO_SIDED:
        psi_t = float(drift.bounds.psi(t))
        width = psi_t - phi_t
        eta = width * 2.0 ** -52
        lo, hi = phi_t + eta, psi_t - eta
        # Shrink the offset if the drift blow-up is not yet dominant there.
        for _ in range(8):
            if g(lo) <= z <= g(hi):
                break
            eta *= 2.0 ** -16
            lo, hi = phi_t + eta, psi_t - eta
        else:
            raise StepError(f"could not bracket the step at t={t} with rhs={z}")
    else:
        eta = max(abs(phi_t), 1.0) * 2.0 ** -52
        lo = phi_t + eta
        for _ in range(8):
            if g(lo) <= z:
                break
            eta *= 2.0 ** -16
            lo = phi_t + eta
        else:
            raise StepError(f"could not bracket the step below at t={t}, rhs={z}")
        hi = max(z, phi_t + 1.0)
        bump = 1.0
        for _ in range(_BRACKET_BUDGET):
            if g(hi) >= z:
                break
            hi += bump
            bump *= 2.0
        else:
            raise StepError(
                f"upper bracket search exhausted at t={t}; last bracket "
                f"[{lo}, {hi}] with g(hi)={g(hi)} < rhs={z}")

    target = tol * max(1.0, abs(z))
    y = 0.5 * (lo + hi)
    for _ in range(200):
        gy = g(y)
        err = gy - z
        if abs(err) <= target:
            return y
        if err > 0.0:
            hi = y
        else:
            lo = y
        slope = 1.0 - drift.db_dy(t, y) * delta
        y_newton = y - err / slope if slope > 0.0 else math.inf
        y = y_newton if lo < y_newton < hi else 0.5 * (lo + hi)
    if abs(g(y) - z) <= target:
        return y
    raise StepError(f"step did not converge at t={t}: residual {abs(g(y)-z):.3e}")


def _choose_stepper(drift: DriftSpec, stepper: str) -> str:
    if stepper in ("closed_form_cir", "cardano_tsb", "bracketed_generic"):
        return stepper
    if stepper == "generic":
        return "bracketed_generic"
    closed = None
    if drift.family == "cir" and drift.param_dict.get("gamma") == 1.0:
        closed = "closed_form_cir"
    elif drift.family in ("tsb", "power_sandwich") \
            and drift.param_dict.get("gamma") == 1.0:
        closed = "cardano_tsb"
    if stepper == "closed":
        if closed is None:
            raise ValueError(
                f"no closed-form stepper for family {drift.family!r} "
                f"with gamma={drift.param_dict.get('gamma')}")
        return closed
    if stepper == "auto":
        return closed or "bracketed_generic"
    raise ValueError(f"unknown stepper {stepper!r}")


def simulate(config: SandwichConfig, noise: NoisePath,
             stepper: str = "auto", tol: float = DEFAULT_TOL,
             unsafe_mesh: bool = False) -> SimulatedPath:
    """Run the backward Euler scheme over the whole grid.

    Refuses to run when the mesh condition fails (uniqueness of the
    implicit step is only guaranteed under it) unless ``unsafe_mesh``.
    Every accepted step is polished until the residual
    |y - b(t,y)*delta - z| falls below tol*max(1,|z|).
    """
    if noise.grid != config.grid:
        raise ValueError("noise grid does not match configuration grid")
    if config.mesh > max_mesh(config) and not unsafe_mesh:
        raise ValueError(
            f"mesh {config.mesh:.6g} exceeds the admissible maximum "
            f"{max_mesh(config):.6g}; pass unsafe_mesh=True to override")
    drift = config.drift
    mode = _choose_stepper(drift, stepper)
    n = config.grid_points
    delta = config.mesh
    tt = config.grid.points
    dz = np.diff(noise.values)
    params = drift.param_dict

    values = np.empty(n + 1)
    residuals = np.zeros(n + 1)
    values[0] = config.y0
    y = config.y0
    for k in range(n):
        t_next = tt[k + 1]
        z = y + dz[k]
        eq = ImplicitStepEquation(t_next=t_next, delta=delta, rhs=z, drift=drift)
        try:
            if mode == "closed_form_cir":
                y_new = implicit_step_cir(y, delta, dz[k],
                                          params["kappa1"], params["kappa2"])
            elif mode == "cardano_tsb":
                y_new = implicit_step_tsb(eq)
            else:
                y_new = implicit_step_generic(eq, tol=tol)
        except StepError as exc:
            raise StepError(f"step {k + 1} (t={t_next:.6g}, y={y:.6g}): {exc}") from exc
        resid = abs(y_new - drift.b(t_next, y_new) * delta - z)
        if resid > tol * max(1.0, abs(z)):
            # Closed forms are exact algebra; polish any float round-off.
            y_new = implicit_step_generic(eq, tol=tol)
            resid = abs(y_new - drift.b(t_next, y_new) * delta - z)
        values[k + 1] = y_new
        residuals[k + 1] = resid
        y = y_new
    return SimulatedPath(grid=config.grid, values=values,
                         noise_seed=noise.seed, stepper=mode,
                         residuals=residuals)


def check_sandwich(path: SimulatedPath, config: SandwichConfig,
                   lam_hat: Optional[float] = None) -> SandwichReport:
    """Verify the strict sandwich at every grid point, and optionally the
    theoretical envelope computed from an estimated Holder constant.

    The envelope check is a soft diagnostic: a grid-based estimate of the
    Holder constant underestimates the true pathwise one.
    """
    from .model import theoretical_envelope

    tt = path.grid.points
    drift = config.drift
    lower = np.asarray(drift.bounds.phi(tt), float)
    strict = path.values > lower
    if drift.kind == TWO_SIDED:
        upper = np.asarray(drift.bounds.psi(tt), float)
        strict &= path.values < upper
    violations = tuple(int(i) for i in np.nonzero(~strict)[0])

    envelope_ok = None
    env_violations = ()
    if lam_hat is not None:
        env_lo, env_hi = theoretical_envelope(config, lam_hat, tt)
        inside = (path.values >= env_lo) & (path.values <= env_hi)
        env_violations = tuple(int(i) for i in np.nonzero(~inside)[0])
        envelope_ok = not env_violations
    return SandwichReport(strict_ok=not violations, violations=violations,
                          envelope_ok=envelope_ok,
                          envelope_violations=env_violations,
                          lam_hat=lam_hat)
