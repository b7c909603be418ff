"""Measured transmission traces and in-situ de-embedding.

Two text formats are read, comma separated with ``#`` comments:

* format A: ``freq_MHz, mag_dB, phase_deg``
* format B: ``freq_MHz, real, imag``

The format comes from a ``# format=A`` / ``# format=B`` header line or from
the caller. Other ``# key=value`` header lines are kept as metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import AmbiguousMinimum, AxisMismatch, InsufficientSamples, NonMonotonicAxis, ParseError


@dataclass(frozen=True)
class MeasuredTrace:
    freq_axis: np.ndarray
    values: np.ndarray = field(repr=False)
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.freq_axis, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if f.ndim != 1 or f.shape != v.shape:
            raise ValueError("freq_axis and values must be 1-D and equally long")
        if np.any(np.diff(f) <= 0):
            raise NonMonotonicAxis("frequency axis must be strictly increasing")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(v))):
            raise ValueError("trace contains non-finite values")
        object.__setattr__(self, "freq_axis", f)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_db_deg(cls, freq, mag_db, phase_deg, label="", meta=None):
        mag = 10.0 ** (np.asarray(mag_db, float) / 20.0)
        return cls(freq, mag * np.exp(1j * np.radians(phase_deg)), label, dict(meta or {}))

    @property
    def mag_db(self):
        return 20.0 * np.log10(np.abs(self.values))

    @property
    def phase_deg(self):
        return np.degrees(np.angle(self.values))

    @property
    def unwrapped_phase_deg(self):
        return np.degrees(np.unwrap(np.angle(self.values)))


def load_trace(path, format_hint: str | None = None, label: str | None = None) -> MeasuredTrace:
    path = Path(path)
    fmt = format_hint.upper() if format_hint else None
    meta = {}
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            body = text[1:].strip()
            key, sep, value = body.partition("=")
            if sep:
                key, value = key.strip(), value.strip()
                if key == "format" and fmt is None:
                    fmt = value.upper()
                elif key != "format":
                    meta[key] = value
            continue
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ParseError(path, lineno, f"expected 3 columns, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError(path, lineno, f"non-numeric field in {text!r}") from None
    if fmt not in ("A", "B"):
        raise ParseError(path, 0, "trace format unknown; add '# format=A' or '# format=B'")
    if not rows:
        raise ParseError(path, 0, "no data rows")
    data = np.array(rows)
    file_label = meta.pop("label", path.stem)
    label = label if label is not None else file_label
    if np.any(np.diff(data[:, 0]) <= 0):
        raise NonMonotonicAxis(f"{path}: frequency axis is not strictly increasing")
    if fmt == "A":
        return MeasuredTrace.from_db_deg(data[:, 0], data[:, 1], data[:, 2], label, meta)
    return MeasuredTrace(data[:, 0], data[:, 1] + 1j * data[:, 2], label, meta)


def write_trace(path, trace: MeasuredTrace, fmt: str = "B"):
    fmt = fmt.upper()
    lines = [f"# format={fmt}", f"# label={trace.label}"]
    lines += [f"# {k}={v}" for k, v in trace.meta.items() if k != "label"]
    if fmt == "A":
        cols = zip(trace.freq_axis, trace.mag_db, trace.phase_deg)
    else:
        cols = zip(trace.freq_axis, trace.values.real, trace.values.imag)
    lines += [",".join(f"{x:.17g}" for x in row) for row in cols]
    Path(path).write_text("\n".join(lines) + "\n")


def _shared_axis(*traces):
    ref = traces[0].freq_axis
    for t in traces[1:]:
        if t.freq_axis.shape != ref.shape or np.any(t.freq_axis != ref):
            raise AxisMismatch(f"trace {t.label!r} does not share the frequency axis of {traces[0].label!r}")
    return ref


def deembed_magnitude(fwd, bwd, ref_fwd, ref_bwd):
    """Magnitude contrast (dB) with the unmodulated line-loss offset removed per point."""
    freq = _shared_axis(fwd, bwd, ref_fwd, ref_bwd)
    raw = fwd.mag_db - bwd.mag_db
    offset = ref_fwd.mag_db - ref_bwd.mag_db
    return freq, raw - offset


def wrap_deg(x):
    """Wrap degrees to (-180, 180]."""
    return -(np.remainder(-np.asarray(x, float) + 180.0, 360.0) - 180.0)


def deembed_phase(fwd, bwd, ref_fwd, ref_bwd):
    """Phase contrast (deg) with the frequency-dependent reference delay removed."""
    freq = _shared_axis(fwd, bwd, ref_fwd, ref_bwd)
    raw = fwd.unwrapped_phase_deg - bwd.unwrapped_phase_deg
    offset = ref_fwd.unwrapped_phase_deg - ref_bwd.unwrapped_phase_deg
    return freq, wrap_deg(raw - offset)


def _antisymmetry_cost(phi, contrast, center, n_delta=64):
    reach = min(center - phi[0], phi[-1] - center)
    if reach <= 0:
        return math.inf
    delta = np.linspace(0.0, reach, n_delta)
    up = np.interp(center + delta, phi, contrast)
    down = np.interp(center - delta, phi, contrast)
    return float(np.mean((up + down) ** 2))


def estimate_phi_offset(phi_deg, contrast_db, min_reach_fraction=0.25, n_candidates=401) -> float:
    """Centre (deg) about which the contrast-vs-phi curve is most nearly odd.

    Candidates are restricted so that at least ``min_reach_fraction`` of the
    half-span is available on both sides; the best one is polished by golden
    section.
    """
    phi = np.asarray(phi_deg, dtype=float)
    m = np.asarray(contrast_db, dtype=float)
    if phi.size < 5:
        raise InsufficientSamples(f"need at least 5 phi samples, got {phi.size}")
    order = np.argsort(phi)
    phi, m = phi[order], m[order]
    if np.any(np.diff(phi) <= 0):
        raise NonMonotonicAxis("phi samples must be distinct")
    half = 0.5 * (phi[-1] - phi[0])
    margin = min_reach_fraction * half
    lo, hi = phi[0] + margin, phi[-1] - margin
    centers = np.linspace(lo, hi, n_candidates)
    cost = np.array([_antisymmetry_cost(phi, m, c) for c in centers])
    scale = float(np.max(cost))
    if scale == 0 or np.ptp(cost) <= 1e-12 * scale:
        raise AmbiguousMinimum("contrast carries no antisymmetry information")
    interior = np.flatnonzero((cost[1:-1] <= cost[:-2]) & (cost[1:-1] <= cost[2:])) + 1
    minima = sorted(interior.tolist(), key=lambda i: cost[i])
    if not minima:
        raise AmbiguousMinimum("no interior minimum of the antisymmetry cost")
    best = minima[0]
    if len(minima) > 1 and cost[minima[1]] <= 2.0 * cost[best]:
        raise AmbiguousMinimum(
            f"minima near {centers[best]:.3f} and {centers[minima[1]]:.3f} deg are within 2x"
        )
    res = optimize.minimize_scalar(
        lambda c: _antisymmetry_cost(phi, m, c),
        bracket=(centers[best - 1], centers[best], centers[best + 1]),
        method="golden",
        tol=1e-10,
    )
    return float(res.x) if res.fun <= cost[best] else float(centers[best])


# --- synthetic line asymmetry (used for round-trip checks and demos) -------------


def inject_line(trace: MeasuredTrace, loss_db=0.0, delay_us=0.0, phase_deg=0.0, label=None) -> MeasuredTrace:
    """Apply an external line: flat loss, linear delay (phase slope) and a constant phase."""
    f = trace.freq_axis
    factor = 10.0 ** (-loss_db / 20.0) * np.exp(-1j * (2 * np.pi * f * delay_us + np.radians(phase_deg)))
    return MeasuredTrace(f, trace.values * factor, label if label is not None else trace.label, dict(trace.meta))
