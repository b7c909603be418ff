"""Time-domain cross-check of the frequency-domain scattering matrix.

The modulated coupled-mode equations are integrated directly in the frame
rotating at the drive frequency, with fixed-step classical RK4. Frequencies are
in MHz and times in microseconds, so every rate picks up a factor 2pi.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import floquet
from .errors import NotSettled, ValidationError
from .model import ChainModel, Modulation, Truncation

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TimeSettings:
    """Integration settings; ``None`` fields are sized from the device and drive."""

    dt: float | None = None
    settle_time: float | None = None
    average_periods: int = 20
    settle_tol: float = 1e-6
    max_windows: int = 40
    steps_per_fastest: int = 100


@dataclass(frozen=True)
class TimeDomainRun:
    drive_port: int
    drive_omega: float
    settle_time: float
    average_window: float
    dt: float
    extracted: np.ndarray  # S column: output ports 1..4 for this drive port
    residual_sideband_power: float
    windows_used: int


def fastest_scale(chain: ChainModel, mod: Modulation, drive_omega: float) -> float:
    s1, s2 = chain.site1, chain.site2
    return max(
        abs(drive_omega - s1.omega0),
        abs(drive_omega - s2.omega0),
        mod.omega_m,
        mod.beta1,
        mod.beta2,
        chain.lambda_static,
        s1.gamma,
        s2.gamma,
    )


def resolve_settings(chain, mod, drive_omega, settings: TimeSettings):
    """(dt, steps_per_period, settle_steps, window_steps), dt commensurate with 1/omega_m."""
    f_max = fastest_scale(chain, mod, drive_omega)
    dt_target = settings.dt if settings.dt is not None else 1.0 / (settings.steps_per_fastest * f_max)
    if dt_target > 1.0 / (50.0 * f_max):
        raise ValidationError(f"dt={dt_target} does not resolve f_max={f_max} MHz (need dt <= 1/(50 f_max))")
    period = 1.0 / mod.omega_m
    steps_per_period = max(1, math.ceil(period / dt_target))
    dt = period / steps_per_period
    gamma_min = min(chain.site1.gamma, chain.site2.gamma)
    settle = settings.settle_time if settings.settle_time is not None else 10.0 / (TWO_PI * gamma_min)
    settle_steps = math.ceil(settle / dt)
    window_steps = settings.average_periods * steps_per_period
    return dt, steps_per_period, settle_steps, window_steps


def integrate(
    chain: ChainModel,
    mod: Modulation,
    drive_port: int,
    drive_omega: float,
    settings: TimeSettings | None = None,
    drive_phase: float = 0.0,
) -> TimeDomainRun:
    """Drive one port with a unit tone and extract the same-frequency outputs."""
    settings = settings or TimeSettings()
    if drive_port not in (1, 2, 3, 4):
        raise ValidationError(f"drive_port must be 1..4, got {drive_port}")
    dt, _, settle_steps, window_steps = resolve_settings(chain, mod, drive_omega, settings)

    s1, s2 = chain.site1, chain.site2
    k = chain.port_couplings
    drive = cmath.exp(1j * drive_phase)
    s_in = [0j, 0j, 0j, 0j]
    s_in[drive_port - 1] = drive
    # a-equation source 2pi K^T s+, per site
    src1 = TWO_PI * (k[0] * s_in[0] + k[1] * s_in[1])
    src2 = TWO_PI * (k[2] * s_in[2] + k[3] * s_in[3])
    # static generator i2pi(Omega0 - omega) - 2pi Gamma
    d1 = TWO_PI * (1j * (s1.omega0 - drive_omega) - s1.gamma)
    d2 = TWO_PI * (1j * (s2.omega0 - drive_omega) - s2.gamma)
    c12 = 1j * TWO_PI * chain.lambda_static
    wm = TWO_PI * mod.omega_m
    m1 = 1j * TWO_PI * mod.beta1
    m2 = 1j * TWO_PI * mod.beta2
    phi = mod.phi

    def rhs(t, a1, a2):
        x1 = d1 + m1 * math.cos(wm * t)
        x2 = d2 + m2 * math.cos(wm * t + phi)
        return x1 * a1 + c12 * a2 + src1, c12 * a1 + x2 * a2 + src2

    a1 = a2 = 0j
    t = 0.0
    h = dt
    half = 0.5 * dt

    def step(t, a1, a2):
        k1a, k1b = rhs(t, a1, a2)
        k2a, k2b = rhs(t + half, a1 + half * k1a, a2 + half * k1b)
        k3a, k3b = rhs(t + half, a1 + half * k2a, a2 + half * k2b)
        k4a, k4b = rhs(t + h, a1 + h * k3a, a2 + h * k3b)
        return (
            a1 + h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a),
            a2 + h / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b),
        )

    for n in range(settle_steps):
        a1, a2 = step(n * dt, a1, a2)
    n0 = settle_steps

    def window(n0, a1, a2):
        # rectangle rule over whole modulation periods: exact for the periodic part
        acc1 = acc2 = 0j
        sq1 = sq2 = 0.0
        for j in range(window_steps):
            acc1 += a1
            acc2 += a2
            sq1 += abs(a1) ** 2
            sq2 += abs(a2) ** 2
            a1, a2 = step((n0 + j) * dt, a1, a2)
        return acc1 / window_steps, acc2 / window_steps, sq1 / window_steps, sq2 / window_steps, a1, a2

    prev = None
    for used in range(1, settings.max_windows + 1):
        m_a1, m_a2, p1, p2, a1, a2 = window(n0, a1, a2)
        n0 += window_steps
        out = np.array(
            [
                s_in[1] - k[0] * m_a1,
                s_in[0] - k[1] * m_a1,
                s_in[3] - k[2] * m_a2,
                s_in[2] - k[3] * m_a2,
            ]
        )
        if prev is not None:
            drift = np.max(np.abs(out - prev)) / max(np.max(np.abs(out)), 1e-300)
            if drift < settings.settle_tol:
                break
        prev = out
    else:
        raise NotSettled(f"windowed average still drifting after {settings.max_windows} windows")

    total = p1 + p2
    carrier = abs(m_a1) ** 2 + abs(m_a2) ** 2
    residual = (total - carrier) / total if total > 0 else 0.0
    return TimeDomainRun(
        drive_port,
        float(drive_omega),
        settle_steps * dt,
        window_steps * dt,
        dt,
        out,
        float(max(residual, 0.0)),
        used,
    )


@dataclass(frozen=True)
class OracleRow:
    omega: float
    drive_port: int
    out_port: int
    time_domain: complex
    frequency_domain: complex
    rel_dev: float


@dataclass(frozen=True)
class OracleReport:
    rows: list
    max_rel_dev: float


def relative_deviation(a, b):
    a, b = complex(a), complex(b)
    scale = abs(b)
    return abs(a - b) / scale if scale > 0 else abs(a - b)


def oracle_compare(
    chain: ChainModel,
    mod: Modulation,
    omega_list,
    trunc: Truncation,
    settings: TimeSettings | None = None,
    pairs=((4, 1), (2, 3)),
    threads=None,
) -> OracleReport:
    """Compare time-domain and frequency-domain elements ``(out, in)`` at each frequency."""
    from .parallel import ordered_map

    drive_ports = sorted({p[1] for p in pairs})
    jobs = [(w, p) for w in omega_list for p in drive_ports]
    runs = ordered_map(lambda j: integrate(chain, mod, j[1], j[0], settings), jobs, threads)
    by_key = {(j[0], j[1]): r for j, r in zip(jobs, runs)}
    rows = []
    for w in omega_list:
        fd = floquet.scattering_matrix(chain, mod, w, trunc)
        for out_port, in_port in pairs:
            td = complex(by_key[(w, in_port)].extracted[out_port - 1])
            ref = fd.s(out_port, in_port)
            rows.append(OracleRow(float(w), in_port, out_port, td, ref, relative_deviation(td, ref)))
    return OracleReport(rows, max(r.rel_dev for r in rows))
