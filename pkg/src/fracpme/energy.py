"""Scalar functionals along the flow: free energy (with optional entropic
term), its dissipation, the dissipation-rate remainder, the virial identity,
and the relative entropy against the standard Gaussian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeRemainder
from .grid import GridDensity, moment, require_normalized
from .riesz import (
    FFT,
    RieszConfig,
    RieszWorkspace,
    hessian_weights,
    riesz_constant,
    riesz_gradient,
    riesz_potential,
    toeplitz_apply,
)

LOG_FLOOR = 1e-300
EPS_TERM_FLOOR = 1e-12


@dataclass(frozen=True)
class PotentialField:
    """xi = (-Dxx)^{-s} rho + lam x^2/2 (+ eps log rho where rho > floor) and
    its spatial derivative; the flow velocity is -dxi."""

    xi: np.ndarray
    dxi: np.ndarray
    s: float
    lam: float
    eps: float


def _eps_log_gradient(rho: GridDensity, eps: float) -> np.ndarray:
    """Centered difference of log rho on {rho > floor}, zero elsewhere."""
    v = rho.values
    h = rho.grid.h
    mask = v > EPS_TERM_FLOOR * float(np.max(v))
    logv = np.where(mask, np.log(np.maximum(v, LOG_FLOOR)), 0.0)
    out = np.zeros_like(v)
    ok = mask[2:] & mask[:-2] & mask[1:-1]
    inner = (logv[2:] - logv[:-2]) / (2 * h)
    out[1:-1] = np.where(ok, inner, 0.0)
    return eps * out


def potential_xi(
    rho: GridDensity,
    s: float,
    lam: float,
    eps: float = 0.0,
    workspace: RieszWorkspace | None = None,
) -> PotentialField:
    """Assemble the driving potential and the velocity field of the flow."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    require_normalized(rho)
    x = rho.x
    if workspace is not None:
        pot, grad = workspace.potential_and_gradient(rho.values)
    else:
        cfg = RieszConfig(s, method=FFT)
        pot = riesz_potential(rho, cfg)
        grad = riesz_gradient(rho, cfg)
    xi = pot + lam * x**2 / 2
    dxi = grad + lam * x
    if eps > 0:
        v = rho.values
        mask = v > EPS_TERM_FLOOR * float(np.max(v))
        xi = xi + np.where(mask, eps * np.log(np.maximum(v, LOG_FLOOR)), 0.0)
        dxi = dxi + _eps_log_gradient(rho, eps)
    return PotentialField(xi=xi, dxi=dxi, s=s, lam=lam, eps=eps)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Interaction, confinement and entropy parts of the free energy."""

    interaction: float
    confinement: float
    boltzmann: float
    eps: float

    @property
    def total(self) -> float:
        return self.interaction + self.confinement + self.eps * self.boltzmann


def boltzmann_entropy(rho: GridDensity) -> float:
    """h * sum rho log rho with the 0 log 0 = 0 convention."""
    v = rho.values
    terms = np.where(v > 0.0, v * np.log(np.maximum(v, LOG_FLOOR)), 0.0)
    return rho.grid.h * float(np.sum(terms))


def interaction_energy(rho: GridDensity, s: float, potential: np.ndarray | None = None) -> float:
    """(1/2) h sum rho * (-Dxx)^{-s} rho, with exact cell kernel weights."""
    if potential is None:
        potential = riesz_potential(rho, RieszConfig(s, method=FFT))
    return 0.5 * rho.grid.h * float(np.sum(rho.values * potential))


def energy(
    rho: GridDensity,
    s: float,
    lam: float,
    eps: float = 0.0,
    potential: np.ndarray | None = None,
    check_mass: bool = True,
) -> EnergyBreakdown:
    """Free energy breakdown; total = interaction + confinement + eps*entropy.

    For s >= 1/2 the interaction kernel does not decay and the value carries
    the domain truncation; differences of energies remain meaningful.
    """
    if check_mass:
        require_normalized(rho)
    inter = interaction_energy(rho, s, potential)
    conf = lam / 2 * moment(rho, 2)
    boltz = boltzmann_entropy(rho)
    return EnergyBreakdown(interaction=inter, confinement=conf, boltzmann=boltz, eps=eps)


def dissipation(
    rho: GridDensity,
    s: float,
    lam: float,
    eps: float = 0.0,
    field: PotentialField | None = None,
) -> float:
    """Entropy production h sum rho * dxi^2; nonnegative by construction."""
    if field is None:
        field = potential_xi(rho, s, lam, eps)
    return rho.grid.h * float(np.sum(rho.values * field.dxi**2))


def remainder_R(
    rho: GridDensity,
    s: float,
    lam: float,
    field: PotentialField | None = None,
) -> float:
    """Quadratic remainder in the dissipation-rate identity
    dI/dt = -2 lam I - 2 R; nonnegative in 1D because the scalar kernel
    (2-2s)|x|^{2s-3} is positive and c_plus > 0 on both sides of s = 1/2.

    The squared velocity difference vanishes quadratically at the diagonal,
    which tames the kernel singularity; the diagonal cell pair is excluded.
    """
    if field is None:
        field = potential_xi(rho, s, lam, 0.0)
    g = rho.grid
    v, d = rho.values, field.dxi
    c_plus = riesz_constant(s).c_plus
    uw = hessian_weights(g.n, g.h, s)
    conv_v = toeplitz_apply(uw, v)
    conv_vd = toeplitz_apply(uw, v * d)
    conv_vd2 = toeplitz_apply(uw, v * d * d)
    t1 = float(np.sum(v * d * d * conv_v))
    t2 = float(np.sum(v * d * conv_vd))
    t3 = float(np.sum(v * conv_vd2))
    val = 0.5 * c_plus * g.h * (t1 - 2 * t2 + t3)
    scale = max(1.0, 0.5 * c_plus * g.h * (abs(t1) + 2 * abs(t2) + abs(t3)))
    if val < -1e-10 * scale:
        raise NegativeRemainder(f"remainder came out {val!r} at scale {scale!r}")
    return val


def virial_check(rho: GridDensity, s: float) -> tuple[float, float]:
    """Both sides of -2 int rho x d/dx (-Dxx)^{-s} rho = (1-2s) int rho (-Dxx)^{-s} rho."""
    cfg = RieszConfig(s, method=FFT)
    h = rho.grid.h
    grad = riesz_gradient(rho, cfg)
    pot = riesz_potential(rho, cfg)
    lhs = -2.0 * h * float(np.sum(rho.values * rho.x * grad))
    rhs = (1 - 2 * s) * h * float(np.sum(rho.values * pot))
    return lhs, rhs


def gaussian_relative_entropy(rho: GridDensity) -> float:
    """Relative entropy against exp(-pi x^2); nonnegative up to quadrature."""
    require_normalized(rho)
    return np.pi * moment(rho, 2) + boltzmann_entropy(rho)
