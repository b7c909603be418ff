"""Equivalent static Hatano-Nelson description of the modulated chain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import floquet
from .errors import ZeroTransmission
from .model import ChainModel, Modulation, Truncation, wrap_angle


@dataclass(frozen=True)
class HnCouplings:
    lambda12: complex
    lambda21: complex
    gamma_eff: tuple[float, float]
    diag_real_shift: tuple[float, float]
    alpha12: complex
    alpha21: complex
    mag_contrast_db: float
    phase_contrast: float
    P_used: int


def mag_contrast_db(forward, backward) -> float:
    """20 log10 |forward / backward|; +-inf when one side vanishes."""
    f, b = abs(forward), abs(backward)
    if f == 0 and b == 0:
        return 0.0
    if b == 0:
        return math.inf
    if f == 0:
        return -math.inf
    return 20.0 * (math.log10(f) - math.log10(b))


def phase_contrast(forward, backward) -> float:
    """arg(forward) - arg(backward) wrapped to (-pi, pi]."""
    return wrap_angle(np.angle(forward) - np.angle(backward))


def _heff_shifted(chain, mod, omega, P):
    red = floquet.sideband_reduction(chain, mod, omega, P)
    return floquet._shifted_h0(chain) + red.O_minus + red.O_plus


def _heff_shifted_trunc(chain, mod, omega, trunc):
    if trunc.mode == "fixed":
        return _heff_shifted(chain, mod, omega, trunc.P), trunc.P
    return floquet.adaptive(lambda P: _heff_shifted(chain, mod, omega, P), trunc)


def effective_hamiltonian(chain: ChainModel, mod: Modulation, omega: float, trunc: Truncation) -> np.ndarray:
    """H0 + O_-P + O~_P at probe frequency ``omega`` (absolute MHz)."""
    h, _ = _heff_shifted_trunc(chain, mod, omega, trunc)
    return h + chain.omega_ref * np.eye(2)


def couplings_from_heff(chain: ChainModel, h_shifted: np.ndarray, P_used: int = 0) -> HnCouplings:
    """Unpack a shifted-frame effective Hamiltonian into HN couplings."""
    lam = chain.lambda_static
    l12 = complex(h_shifted[0, 1])
    l21 = complex(h_shifted[1, 0])
    ref = chain.omega_ref
    shift = (
        float(h_shifted[0, 0].real - (chain.site1.omega0 - ref)),
        float(h_shifted[1, 1].real - (chain.site2.omega0 - ref)),
    )
    return HnCouplings(
        lambda12=l12,
        lambda21=l21,
        gamma_eff=(float(h_shifted[0, 0].imag), float(h_shifted[1, 1].imag)),
        diag_real_shift=shift,
        alpha12=1 - l12 / lam,
        alpha21=1 - l21 / lam,
        mag_contrast_db=mag_contrast_db(l21, l12),
        phase_contrast=phase_contrast(l21, l12),
        P_used=int(P_used),
    )


def hn_couplings(chain: ChainModel, mod: Modulation, trunc: Truncation, omega: float | None = None) -> HnCouplings:
    omega = chain.omega_ref if omega is None else omega
    h, P_used = _heff_shifted_trunc(chain, mod, omega, trunc)
    return couplings_from_heff(chain, h, P_used)


def alpha_first_order(beta, omega_m, phi, lambda_static, gamma0):
    """Closed-form (alpha12, alpha21) keeping only the first sideband pair.

    Exact for P = 1 on identical sites with total decay ``gamma0``.
    """
    g2 = gamma0 * gamma0
    den = (g2 + (lambda_static - omega_m) ** 2) * (g2 + (lambda_static + omega_m) ** 2)
    sym = (g2 + lambda_static**2 - omega_m**2) * math.cos(phi)
    asym = 2.0 * gamma0 * omega_m * math.sin(phi)
    scale = 0.5 * beta * beta / den
    return scale * (sym + asym), scale * (sym - asym)


def contrast_at_omega0(chain: ChainModel, mod: Modulation, trunc: Truncation):
    """(20log|S41| - 20log|S23|, arg S41 - arg S23) at the chain centre frequency."""
    res = floquet.scattering_matrix(chain, mod, chain.omega_ref, trunc)
    s41, s23 = res.s(4, 1), res.s(2, 3)
    tiny = np.finfo(float).tiny
    if abs(s41) < tiny:
        raise ZeroTransmission("S41", abs(s23))
    if abs(s23) < tiny:
        raise ZeroTransmission("S23", abs(s41))
    return mag_contrast_db(s41, s23), phase_contrast(s41, s23)
