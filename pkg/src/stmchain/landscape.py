"""Maps of the HN couplings over modulation-parameter space.

Exceptional rings are the zero sets of Re(lambda12) and Re(lambda21) in the
(omega_m, phi) plane at fixed beta; pure gyration sits where
lambda21 = -lambda12 between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from shapely.geometry import LineString
from skimage import measure

from . import floquet, hn
from .errors import BracketInvalid, NumericalError, ZeroTransmission
from .model import ChainModel, Modulation, Truncation
from .parallel import ordered_map

STATUS_OK = "ok"
STATUS_SINGULAR = "SingularLevel"
STATUS_NOCONV = "NoConvergence"

ROW_BLOCK = 8
TWO_PI = 2.0 * math.pi


# --- batched coupling evaluation ---------------------------------------------


def heff_batch(chain: ChainModel, beta1, beta2, omega_m, phi, trunc: Truncation):
    """Shifted-frame H_eff at omega_ref for a broadcast batch of drive parameters.

    Returns ``(h, P_used, status)`` with ``h`` of shape batch + (2, 2). Failed
    elements get NaN entries and a status string. Each element follows exactly
    the truncation schedule it would follow on its own.
    """
    beta1, beta2, omega_m, phi = np.broadcast_arrays(
        np.asarray(beta1, float), np.asarray(beta2, float), np.asarray(omega_m, float), np.asarray(phi, float)
    )
    shape = beta1.shape
    b1 = (0.5 * beta1).ravel().astype(complex)
    b2 = (0.5 * beta2 * np.exp(1j * phi)).ravel()
    wm = omega_m.ravel()
    n = wm.size
    hs = floquet._shifted_h0(chain)
    out = np.full((n, 2, 2), np.nan + 0j)
    p_used = np.zeros(n, dtype=int)
    status = np.full(n, STATUS_OK, dtype=object)

    def level(idx, P):
        om, op, cond, _ = floquet.reduce_batch(hs, np.zeros(idx.size), wm[idx], b1[idx], b2[idx], P)
        return hs + om + op, cond

    if trunc.mode == "fixed":
        idx = np.arange(n)
        h, cond = level(idx, trunc.P)
        bad = ~(cond < floquet.COND_LIMIT) if trunc.P > 0 else np.zeros(n, bool)
        out[~bad] = h[~bad]
        p_used[:] = trunc.P
        status[bad] = STATUS_SINGULAR
    else:
        idx = np.arange(n)
        prev = np.broadcast_to(hs, (n, 2, 2))
        for P in range(1, trunc.cap + 1):
            cur, cond = level(idx, P)
            bad = ~(cond < floquet.COND_LIMIT)
            conv = (floquet.relative_change(cur, prev) < trunc.tol) & ~bad
            out[idx[conv]] = cur[conv]
            p_used[idx[conv]] = P
            status[idx[bad]] = STATUS_SINGULAR
            keep = ~(conv | bad)
            idx, prev = idx[keep], cur[keep]
            if idx.size == 0:
                break
        status[idx] = STATUS_NOCONV
    return out.reshape(shape + (2, 2)), p_used.reshape(shape), status.reshape(shape)


def couplings_batch(chain, beta1, beta2, omega_m, phi, trunc):
    """(lambda12, lambda21, status) arrays over a broadcast batch."""
    h, _, status = heff_batch(chain, beta1, beta2, omega_m, phi, trunc)
    return h[..., 0, 1], h[..., 1, 0], status


# --- parameter maps ------------------------------------------------------------


@dataclass(frozen=True)
class LandscapeGrid:
    beta1: float
    beta2: float
    omega_m_axis: np.ndarray
    phi_axis: np.ndarray  # radians
    lambda12: np.ndarray = field(repr=False)
    lambda21: np.ndarray = field(repr=False)
    mag_contrast_db: np.ndarray = field(repr=False)
    phase_contrast: np.ndarray = field(repr=False)
    P_used: np.ndarray = field(repr=False)
    status: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.lambda12.shape


def _check_axis(name, axis):
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or axis.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D axis")
    if np.any(np.diff(axis) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return axis


def _contrasts(l12, l21):
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = 20.0 * (np.log10(np.abs(l21)) - np.log10(np.abs(l12)))
    # wrap to (-pi, pi]
    phase = -(np.remainder(np.angle(l12) - np.angle(l21) + math.pi, TWO_PI) - math.pi)
    return mag, phase


def _row_blocks(n):
    return [slice(i, min(i + ROW_BLOCK, n)) for i in range(0, n, ROW_BLOCK)]


def parameter_map(
    chain: ChainModel, beta1, beta2, omega_m_axis, phi_axis, trunc: Truncation, threads=None
) -> LandscapeGrid:
    """HN couplings on an omega_m x phi grid (phi in radians)."""
    wm = _check_axis("omega_m_axis", omega_m_axis)
    ph = _check_axis("phi_axis", phi_axis)

    def block(sl):
        return heff_batch(chain, beta1, beta2, wm[sl, None], ph[None, :], trunc)

    parts = ordered_map(block, _row_blocks(wm.size), threads)
    h = np.concatenate([p[0] for p in parts], axis=0)
    p_used = np.concatenate([p[1] for p in parts], axis=0)
    status = np.concatenate([p[2] for p in parts], axis=0)
    l12, l21 = h[..., 0, 1], h[..., 1, 0]
    mag, phase = _contrasts(l12, l21)
    return LandscapeGrid(float(beta1), float(beta2), wm, ph, l12, l21, mag, phase, p_used, status)


# --- exceptional-ring tracing ------------------------------------------------------


@dataclass(frozen=True)
class EpContour:
    which: str  # "12" or "21"
    points: np.ndarray = field(repr=False)  # (N, 2): omega_m [MHz], phi [rad], phi continuous
    closed: bool
    flagged: np.ndarray = field(repr=False)  # imaginary-part guard violations

    @property
    def phi_range(self):
        return float(self.points[:, 1].min()), float(self.points[:, 1].max())

    @property
    def omega_m_range(self):
        return float(self.points[:, 0].min()), float(self.points[:, 0].max())


def _pick(which):
    if which not in ("12", "21"):
        raise ValueError("which must be '12' or '21'")
    return (0, 1) if which == "12" else (1, 0)


def _coupling_values(chain, beta1, beta2, omega_m, phi, trunc, which):
    h, _, status = heff_batch(chain, beta1, beta2, omega_m, phi, trunc)
    i, j = _pick(which)
    return h[..., i, j], status


def _bisect_batch(fun, lo, hi, f_lo, tol, max_iter=200):
    """Vectorised bisection of ``fun`` on [lo, hi] until |f(mid)| < tol."""
    lo, hi, f_lo = lo.copy(), hi.copy(), f_lo.copy()
    x = 0.5 * (lo + hi)
    active = np.ones(lo.shape, bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        mid = 0.5 * (lo[idx] + hi[idx])
        fm = fun(idx, mid)
        x[idx] = mid
        done = np.abs(fm) < tol
        same = np.sign(fm) == np.sign(f_lo[idx])
        lo[idx] = np.where(same, mid, lo[idx])
        f_lo[idx] = np.where(same, fm, f_lo[idx])
        hi[idx] = np.where(same, hi[idx], mid)
        stalled = (hi[idx] - lo[idx]) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))
        active[idx[done | stalled]] = False
    return x


def _seam_phi(chain, beta1, beta2, wm, trunc, which, n_phi):
    """phi (rad) of the column where Re(lambda_which) is most positive over all omega_m."""
    phis = -math.pi + TWO_PI * np.arange(n_phi - 1) / (n_phi - 1)
    lam, _ = _coupling_values(chain, beta1, beta2, wm[:, None], phis[None, :], trunc, which)
    worst = np.nanmin(lam.real, axis=0)
    return float(phis[int(np.nanargmax(worst))])


def ep_contour(
    chain: ChainModel,
    beta,
    which: str,
    window=None,
    trunc: Truncation | None = None,
    grid_resolution=(121, 181),
    refine_tol=1e-6,
    imag_tol=None,
    beta2=None,
    threads=None,
) -> list[EpContour]:
    """Trace zero contours of Re(lambda_which) at fixed beta.

    ``window = (omega_m_lo, omega_m_hi, phi_lo, phi_hi)`` with phi in radians.
    Without a window, omega_m spans [14, 26] MHz and phi a full period whose
    seam is placed where the coupling stays positive, so rings straddling
    phi = +-180 deg come out closed. Returned contours carry continuous phi.
    An empty list means no exceptional points in the window.
    """
    trunc = trunc or Truncation.adaptive()
    _pick(which)
    beta1 = float(beta)
    beta2 = beta1 if beta2 is None else float(beta2)
    imag_tol = 1e-4 * chain.lambda_static if imag_tol is None else imag_tol
    n_wm, n_phi = grid_resolution
    if window is None:
        wm = np.linspace(14.0, 26.0, n_wm)
        start = _seam_phi(chain, beta1, beta2, wm, trunc, which, n_phi)
        ph = start + TWO_PI * np.arange(n_phi) / (n_phi - 1)
    else:
        wm = np.linspace(window[0], window[1], n_wm)
        ph = np.linspace(window[2], window[3], n_phi)

    grid = parameter_map(chain, beta1, beta2, wm, ph, trunc, threads)
    lam = grid.lambda12 if which == "12" else grid.lambda21
    values = lam.real
    if not np.all(np.isfinite(values)):
        # failed cells cannot be contoured; treat them as non-crossing
        values = np.where(np.isfinite(values), values, np.nanmax(np.abs(values)))
    raw = measure.find_contours(values, 0.0)
    contours = []
    for path in raw:
        rows, cols = path[:, 0], path[:, 1]
        # each marching-squares vertex sits on a grid edge: fractional row -> omega_m edge
        along_wm = rows != np.round(rows)
        r0 = np.minimum(np.floor(rows).astype(int), n_wm - 2 if n_wm > 1 else 0)
        c0 = np.minimum(np.floor(cols).astype(int), n_phi - 2 if n_phi > 1 else 0)
        r_near = np.round(rows).astype(int)
        c_near = np.round(cols).astype(int)
        lo = np.where(along_wm, wm[r0], ph[c0])
        hi = np.where(along_wm, wm[np.minimum(r0 + 1, n_wm - 1)], ph[np.minimum(c0 + 1, n_phi - 1)])
        fixed = np.where(along_wm, ph[c_near], wm[r_near])

        def point(idx, x, along=along_wm, fixed=fixed):
            w = np.where(along[idx], x, fixed[idx])
            p = np.where(along[idx], fixed[idx], x)
            return w, p

        def f(idx, x):
            w, p = point(idx, x)
            val, _ = _coupling_values(chain, beta1, beta2, w, p, trunc, which)
            return val.real

        f_lo = f(np.arange(lo.size), lo)
        x = _bisect_batch(f, lo, hi, f_lo, refine_tol)
        w, p = point(np.arange(lo.size), x)
        val, _ = _coupling_values(chain, beta1, beta2, w, p, trunc, which)
        flagged = np.abs(val.imag) >= imag_tol
        closed = bool(np.allclose(path[0], path[-1]))
        contours.append(EpContour(which, np.column_stack([w, p]), closed, flagged))
    return contours


def _as_line(contour, shift=0.0):
    pts = contour.points.copy()
    pts[:, 1] += shift
    return LineString(pts)


def contours_intersect(first: list[EpContour], second: list[EpContour]) -> bool:
    """Whether any pair of contours crosses, with phi compared modulo 2pi."""
    for a in first:
        la = _as_line(a)
        for b in second:
            for k in (-2, -1, 0, 1, 2):
                if la.intersects(_as_line(b, k * TWO_PI)):
                    return True
    return False


# --- critical modulation strength ------------------------------------------------


def _min_over(fun, axis):
    """Minimum of a batched scalar function over a dense axis, golden-section refined."""
    vals = fun(axis)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("non-finite coupling during minimisation")
    i = int(np.argmin(vals))
    if i == 0 or i == axis.size - 1:
        return float(vals[i]), float(axis[i])
    res = optimize.minimize_scalar(
        lambda x: float(fun(np.array([x]))[0]),
        bracket=(axis[i - 1], axis[i], axis[i + 1]),
        method="golden",
        tol=1e-10,
    )
    if res.fun < vals[i]:
        return float(res.fun), float(res.x)
    return float(vals[i]), float(axis[i])


def symmetric_phase_coupling(chain, beta, omega_m_window, trunc, n_grid=121):
    """g(beta): min over omega_m of Re(lambda12) at phi = 0, and its argmin."""
    axis = np.linspace(omega_m_window[0], omega_m_window[1], n_grid)

    def fun(w):
        l12, _, _ = couplings_batch(chain, beta, beta, w, 0.0, trunc)
        return l12.real

    return _min_over(fun, axis)


def critical_beta(chain: ChainModel, beta_bracket, omega_m_window=(14.0, 26.0), trunc=None, tol=1e-6) -> float:
    """Smallest beta at which the two exceptional rings meet at phi = 0."""
    trunc = trunc or Truncation.adaptive()
    a, b = beta_bracket

    def g(beta):
        return symmetric_phase_coupling(chain, beta, omega_m_window, trunc)[0]

    ga, gb = g(a), g(b)
    if np.sign(ga) == np.sign(gb):
        raise BracketInvalid(f"g(beta) has the same sign at {a} ({ga:.4g}) and {b} ({gb:.4g})")
    return float(optimize.bisect(g, a, b, xtol=tol))


def ep_onset_beta(chain, omega_m, which="12", beta_bracket=(0.0, 40.0), trunc=None, tol=1e-6, n_phi=361):
    """Smallest beta at which Re(lambda_which) first touches zero along phi at fixed omega_m.

    This is the tip of the exceptional surface for that modulation frequency.
    """
    trunc = trunc or Truncation.adaptive()
    i, j = _pick(which)
    axis = np.linspace(-math.pi, math.pi, n_phi)

    def h(beta):
        def fun(p):
            lam, _ = _coupling_values(chain, beta, beta, omega_m, p, trunc, which)
            return lam.real

        return _min_over(fun, axis)[0]

    a, b = beta_bracket
    ha, hb = h(a), h(b)
    if np.sign(ha) == np.sign(hb):
        raise BracketInvalid(f"no EP onset between beta={a} and beta={b}")
    return float(optimize.bisect(h, a, b, xtol=tol))


# --- pure gyration -------------------------------------------------------------------


@dataclass(frozen=True)
class GyrationPoint:
    beta: float
    omega_m: float
    phi: float  # radians
    residual: float  # |lambda21 + lambda12|, MHz
    lambda12: complex
    lambda21: complex

    @property
    def phi_deg(self):
        return math.degrees(self.phi)


def gyration_find(chain: ChainModel, beta, omega_m, trunc=None, tol=1e-10, n_scan=721, beta2=None):
    """All phi in (-pi, pi] where lambda21 = -lambda12 with the couplings of opposite sign."""
    trunc = trunc or Truncation.adaptive()
    beta1 = float(beta)
    beta2 = beta1 if beta2 is None else float(beta2)
    phis = -math.pi + TWO_PI * np.arange(1, n_scan + 1) / n_scan  # (-pi, pi]
    l12, l21, _ = couplings_batch(chain, beta1, beta2, omega_m, phis, trunc)
    f = (l12 + l21).real
    opposite = l12.real * l21.real < 0

    def fun(p):
        a, b, _ = couplings_batch(chain, beta1, beta2, omega_m, np.array([p]), trunc)
        return float((a + b).real[0])

    points = []
    n = phis.size
    for k in range(n):
        k2 = (k + 1) % n
        if not (opposite[k] and opposite[k2]):
            continue
        if f[k] == 0:
            root = phis[k]
        elif np.sign(f[k]) == np.sign(f[k2]):
            continue
        else:
            lo, hi = phis[k], phis[k2] + (TWO_PI if k2 == 0 else 0.0)
            root = optimize.bisect(fun, lo, hi, xtol=tol)
        root = math.remainder(root, TWO_PI)
        if root <= -math.pi:
            root += TWO_PI
        a, b, _ = couplings_batch(chain, beta1, beta2, omega_m, np.array([root]), trunc)
        a, b = complex(a[0]), complex(b[0])
        if a.real * b.real >= 0:
            continue
        points.append(GyrationPoint(beta1, float(omega_m), float(root), abs(a + b), a, b))
    points.sort(key=lambda g: g.phi)
    return points


# --- isolation along a phi cut -------------------------------------------------------


@dataclass(frozen=True)
class IsolationScan:
    phi_axis: np.ndarray
    mag_contrast_db: np.ndarray
    phase_contrast: np.ndarray
    status: list
    max_contrast_db: float
    phi_at_max: float
    width_above: float  # radians where contrast > threshold
    min_contrast_db: float
    phi_at_min: float
    width_below: float  # radians where contrast < -threshold
    threshold_db: float


def _width(x, y, threshold):
    """Length of {x : y(x) > threshold} under linear interpolation of samples."""
    total = 0.0
    for x0, x1, y0, y1 in zip(x[:-1], x[1:], y[:-1], y[1:]):
        a, b = y0 > threshold, y1 > threshold
        if a and b:
            total += x1 - x0
        elif a != b:
            if not (np.isfinite(y0) and np.isfinite(y1)):
                total += 0.5 * (x1 - x0)
                continue
            t = (threshold - y0) / (y1 - y0)
            total += (1 - t) * (x1 - x0) if b else t * (x1 - x0)
    return total


def _contrast(chain, mod, trunc):
    try:
        return hn.contrast_at_omega0(chain, mod, trunc) + (STATUS_OK,)
    except ZeroTransmission as exc:
        mag = math.inf if exc.which == "S23" else -math.inf
        return mag, math.pi, type(exc).__name__
    except NumericalError as exc:
        return math.nan, math.nan, type(exc).__name__


def isolation_scan(
    chain: ChainModel, beta, omega_m, phi_axis, trunc=None, threshold_db=20.0, refine=True, beta2=None, threads=None
) -> IsolationScan:
    """S-parameter contrast at omega0 along a phi cut (radians)."""
    trunc = trunc or Truncation.adaptive()
    beta2 = beta if beta2 is None else beta2
    ph = _check_axis("phi_axis", phi_axis)
    base = Modulation(float(beta), float(beta2), float(omega_m), 0.0)
    rows = ordered_map(lambda p: _contrast(chain, base.with_phi(p), trunc), ph, threads)
    mag = np.array([r[0] for r in rows])
    phase = np.array([r[1] for r in rows])
    status = [r[2] for r in rows]

    def extremum(sign):
        vals = sign * np.where(np.isnan(mag), -np.inf * sign, mag)
        i = int(np.argmax(vals))
        best, at = float(mag[i]), float(ph[i])
        if refine and 0 < i < ph.size - 1 and np.isfinite(best):
            res = optimize.minimize_scalar(
                lambda p: -sign * _contrast(chain, base.with_phi(p), trunc)[0],
                bracket=(ph[i - 1], ph[i], ph[i + 1]),
                method="golden",
                tol=1e-8,
            )
            if -sign * res.fun > sign * best or not np.isfinite(res.fun):
                best, at = float(-sign * res.fun), float(res.x)
        return best, at

    mx, at_mx = extremum(1.0)
    mn, at_mn = extremum(-1.0)
    return IsolationScan(
        ph, mag, phase, status, mx, at_mx, _width(ph, mag, threshold_db), mn, at_mn,
        _width(ph, -mag, threshold_db), threshold_db,
    )
