"""Device and drive parameters for the two-resonator chain.

All frequencies, rates and couplings are ordinary frequencies in MHz
(value = omega / 2pi). Port couplings are real amplitudes in sqrt(MHz).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import constants

from .errors import (
    DegenerateSquid,
    EnergyConservationViolated,
    NonPositiveParameter,
    ValidationError,
)

ENERGY_RTOL = 1e-9


def wrap_angle(x: float) -> float:
    """Wrap to (-pi, pi]."""
    y = math.remainder(x, 2 * math.pi)
    if y <= -math.pi:
        y += 2 * math.pi
    return y


def _check_positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise NonPositiveParameter(name, value)


def _check_nonneg(name, value):
    if not (math.isfinite(value) and value >= 0):
        raise NonPositiveParameter(name, value)


@dataclass(frozen=True)
class SiteParams:
    omega0: float
    gamma: float
    k_a: float
    k_b: float
    kappa: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self, name: str = "site"):
        _check_positive(f"{name}.omega0", self.omega0)
        _check_positive(f"{name}.gamma", self.gamma)
        _check_nonneg(f"{name}.k_a", self.k_a)
        _check_nonneg(f"{name}.k_b", self.k_b)
        _check_nonneg(f"{name}.kappa", self.kappa)
        residual = 2 * self.gamma - (self.k_a**2 + self.k_b**2 + self.kappa)
        if abs(residual) > ENERGY_RTOL * 2 * self.gamma:
            raise EnergyConservationViolated(name, residual)

    @classmethod
    def from_rates(cls, omega0, k_a_sq, k_b_sq, kappa, gamma=None):
        """Build a site from power coupling rates; gamma defaults to the balanced value."""
        if gamma is None:
            gamma = 0.5 * (k_a_sq + k_b_sq + kappa)
        return cls(omega0, gamma, math.sqrt(k_a_sq), math.sqrt(k_b_sq), kappa)


@dataclass(frozen=True)
class ChainModel:
    site1: SiteParams
    site2: SiteParams
    lambda_static: float

    def __post_init__(self):
        self.validate()

    def validate(self):
        self.site1.validate("site1")
        self.site2.validate("site2")
        _check_positive("lambda_static", self.lambda_static)

    @property
    def omega_ref(self) -> float:
        """Mean site frequency; the default evaluation point for HN extraction."""
        return 0.5 * (self.site1.omega0 + self.site2.omega0)

    @property
    def port_couplings(self):
        """(k1, k2, k3, k4) for ports 1..4."""
        return (self.site1.k_a, self.site1.k_b, self.site2.k_a, self.site2.k_b)

    @property
    def is_symmetric(self) -> bool:
        return self.site1 == self.site2


def build_chain(site1: SiteParams, site2: SiteParams, lambda_static: float) -> ChainModel:
    return ChainModel(site1, site2, float(lambda_static))


def table_s1_chain() -> ChainModel:
    """The measured two-resonator device: omega0 = 6870.5 MHz, lambda = 16.4 MHz."""
    site1 = SiteParams.from_rates(6870.5, 3.7, 3.7, 0.4, gamma=3.9)
    site2 = SiteParams.from_rates(6870.5, 3.4, 3.4, 0.4, gamma=3.6)
    return build_chain(site1, site2, 16.4)


def symmetric_chain(omega0=6870.5, gamma=3.75, kappa=0.4, lambda_static=16.4) -> ChainModel:
    """Identical-site idealisation of the measured device (averaged gamma)."""
    k_sq = gamma - 0.5 * kappa
    site = SiteParams.from_rates(omega0, k_sq, k_sq, kappa, gamma=gamma)
    return build_chain(site, site, lambda_static)


@dataclass(frozen=True)
class Modulation:
    beta1: float
    beta2: float
    omega_m: float
    phi: float = 0.0

    def __post_init__(self):
        _check_nonneg("beta1", self.beta1)
        _check_nonneg("beta2", self.beta2)
        _check_positive("omega_m", self.omega_m)
        if not math.isfinite(self.phi):
            raise ValidationError(f"phi must be finite, got {self.phi!r}")
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    @classmethod
    def common(cls, beta, omega_m, phi=0.0):
        return cls(beta, beta, omega_m, phi)

    @classmethod
    def from_degrees(cls, beta1, beta2, omega_m, phi_deg):
        return cls(beta1, beta2, omega_m, math.radians(phi_deg))

    @property
    def phi_deg(self) -> float:
        return math.degrees(self.phi)

    @property
    def is_static(self) -> bool:
        return self.beta1 == 0 and self.beta2 == 0

    def with_phi(self, phi):
        return Modulation(self.beta1, self.beta2, self.omega_m, phi)


@dataclass(frozen=True)
class Truncation:
    """Sideband cut-off: ``fixed`` uses ``P`` directly, ``adaptive`` grows P until
    the relative max-entry change drops below ``tol`` (at most ``cap``)."""

    mode: str = "adaptive"
    P: int = 0
    tol: float = 1e-9
    cap: int = 40

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValidationError(f"truncation mode must be 'fixed' or 'adaptive', got {self.mode!r}")
        if int(self.P) != self.P or self.P < 0:
            raise ValidationError(f"P must be a non-negative integer, got {self.P!r}")
        if self.mode == "adaptive":
            _check_positive("tol", self.tol)
            if self.cap < 1:
                raise ValidationError(f"cap must be >= 1, got {self.cap!r}")

    @classmethod
    def fixed(cls, P):
        return cls("fixed", int(P))

    @classmethod
    def adaptive(cls, tol=1e-9, cap=40):
        return cls("adaptive", 0, tol, cap)

    @classmethod
    def parse(cls, text: str) -> "Truncation":
        """Parse the CLI form ``P`` or ``auto:tol``."""
        text = text.strip()
        if text.startswith("auto"):
            _, _, tol = text.partition(":")
            return cls.adaptive(float(tol) if tol else 1e-9)
        try:
            return cls.fixed(int(text))
        except ValueError:
            raise ValidationError(f"bad truncation {text!r}; expected an integer or auto:tol") from None


@dataclass(frozen=True)
class SquidParams:
    Ic: float  # microampere, smaller junction
    gamma_asym: float
    n_series: int = 1

    def __post_init__(self):
        _check_positive("Ic", self.Ic)
        _check_nonneg("gamma_asym", self.gamma_asym)
        if int(self.n_series) != self.n_series or self.n_series < 1:
            raise NonPositiveParameter("n_series", self.n_series)


def squid_inductance(flux: float, p: SquidParams) -> float:
    """Series inductance (nH) of ``p.n_series`` identical dc-SQUIDs at reduced flux Phi_e/Phi_0."""
    g = p.gamma_asym
    s = 1.0 + g * g + 2.0 * g * math.cos(2.0 * math.pi * flux)
    if s <= 1e-14 * (1.0 + g * g):
        raise DegenerateSquid(f"SQUID inductance diverges at flux={flux}, gamma_asym={g}")
    ic = p.Ic * 1e-6
    henry = constants.hbar / (2.0 * constants.e * ic * math.sqrt(s))
    return p.n_series * henry * 1e9


def bias_to_beta(voltage_pp: float, ratio: float) -> float:
    """Modulation strength (MHz) from an ac bias amplitude (mVpp) and a per-resonator ratio."""
    _check_nonneg("voltage_pp", voltage_pp)
    _check_positive("ratio", ratio)
    return ratio * voltage_pp
