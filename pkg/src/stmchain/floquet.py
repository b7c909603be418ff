"""Single-frequency scattering of the modulated chain.

The infinite sideband ladder is collapsed onto the zeroth band with the
continued-fraction reduction; ``banded_solve`` assembles the truncated block
tridiagonal system explicitly and serves as an independent cross-check.

Internally every frequency is measured from ``chain.omega_ref`` so that the
GHz-scale carrier never enters a subtraction of nearly equal numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, NumericalError, SingularLevel, SingularSystem
from .model import ChainModel, Modulation, Truncation

COND_LIMIT = 1e14

# Hanger coupling: each feedline swaps its own two ports.
PORT_SWAP = np.array(
    [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


@dataclass(frozen=True)
class ScatteringResult:
    omega: float
    S: np.ndarray = field(repr=False)
    P_used: int

    def s(self, out_port: int, in_port: int) -> complex:
        """Element by 1-based port numbers, e.g. ``s(4, 1)`` is S41."""
        return complex(self.S[out_port - 1, in_port - 1])


@dataclass(frozen=True)
class SidebandReduction:
    O_minus: np.ndarray
    O_plus: np.ndarray
    omega: float
    P: int


def static_hamiltonian(chain: ChainModel) -> np.ndarray:
    s1, s2 = chain.site1, chain.site2
    lam = chain.lambda_static
    return np.array(
        [[s1.omega0 + 1j * s1.gamma, lam], [lam, s2.omega0 + 1j * s2.gamma]], dtype=complex
    )


def _shifted_h0(chain):
    ref = chain.omega_ref
    s1, s2 = chain.site1, chain.site2
    lam = chain.lambda_static
    return np.array(
        [[(s1.omega0 - ref) + 1j * s1.gamma, lam], [lam, (s2.omega0 - ref) + 1j * s2.gamma]],
        dtype=complex,
    )


def _k_matrix(chain):
    k1, k2, k3, k4 = chain.port_couplings
    return np.array([[k1, 0], [k2, 0], [0, k3], [0, k4]], dtype=complex)


# --- batched 2x2 kernels -------------------------------------------------------
# Arrays carry arbitrary leading batch dimensions and a trailing (2, 2).


def _inv2(m):
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[..., 0, 0] = d / det
        out[..., 0, 1] = -b / det
        out[..., 1, 0] = -c / det
        out[..., 1, 1] = a / det
        # Frobenius condition number ||M||_F ||M^-1||_F = ||M||_F^2 / |det| for 2x2.
        fro2 = (np.abs(a) ** 2 + np.abs(b) ** 2) + (np.abs(c) ** 2 + np.abs(d) ** 2)
        cond = fro2 / np.abs(det)
    cond = np.where(np.isfinite(cond), cond, np.inf)
    return out, cond


def _ladder(hs, delta, step, left, right, P):
    """Nested reduction of one half of the ladder.

    Level p (P down to 1) inverts ``delta - (hs + p*step) - X_{p+1}`` and
    sandwiches it as ``left_i * inv_ij * right_j``. Returns the reduced matrix
    and the worst (cond, p) seen per batch element.
    """
    eye = np.eye(2)
    x = np.zeros(np.broadcast_shapes(hs.shape, delta.shape + (2, 2)), dtype=complex)
    worst_cond = np.zeros(x.shape[:-2])
    worst_p = np.zeros(x.shape[:-2], dtype=int)
    sandwich = left[..., :, None] * right[..., None, :]
    for p in range(P, 0, -1):
        level = (delta - p * step)[..., None, None] * eye - hs - x
        inv, cond = _inv2(level)
        worse = cond > worst_cond
        worst_cond = np.where(worse, cond, worst_cond)
        worst_p = np.where(worse, p, worst_p)
        x = sandwich * inv
    return x, worst_cond, worst_p


def reduce_batch(hs, delta, omega_m, b1, b2, P):
    """Batched sideband reduction in the shifted frame.

    ``hs`` is (..., 2, 2); ``delta``, ``omega_m``, ``b1``, ``b2`` broadcast
    against the batch shape, with ``b1 = beta1/2`` and ``b2 = beta2/2 e^{i phi}``
    the diagonal of the sideband coupling B. Returns ``(O_minus, O_plus, cond, p)``
    where ``cond``/``p`` locate the worst-conditioned level (p signed).
    """
    delta = np.asarray(delta, dtype=float)
    omega_m = np.asarray(omega_m, dtype=float)
    b = np.stack(np.broadcast_arrays(np.asarray(b1, dtype=complex), np.asarray(b2, dtype=complex)), axis=-1)
    bc = b.conj()
    # Lower ladder: H_{-p} = H0 + p*omega_m, sandwiched as B (...)^{-1} B^dagger.
    om, cond_m, p_m = _ladder(hs, delta, omega_m, b, bc, P)
    # Upper ladder: H_p = H0 - p*omega_m, sandwiched as B^dagger (...)^{-1} B.
    op, cond_p, p_p = _ladder(hs, delta, -omega_m, bc, b, P)
    lower_worse = cond_m >= cond_p
    cond = np.where(lower_worse, cond_m, cond_p)
    p = np.where(lower_worse, -p_m, p_p)
    return om, op, cond, p


def scattering_from_heff(chain, heff_shifted, delta):
    """S = C - i D [omega I - H_eff]^{-1} K^T with D = -K^*."""
    k = _k_matrix(chain)
    resolvent, cond = _inv2(delta[..., None, None] * np.eye(2) - heff_shifted)
    s = PORT_SWAP + 1j * (k.conj() @ resolvent @ k.T)
    return s, cond


def _mod_arrays(mod: Modulation):
    return 0.5 * mod.beta1, 0.5 * mod.beta2 * np.exp(1j * mod.phi)


def _raise_if_singular(cond, p):
    cond = float(cond)
    if not cond < COND_LIMIT:
        raise SingularLevel(int(p), cond)


def sideband_reduction(chain: ChainModel, mod: Modulation, omega: float, P: int) -> SidebandReduction:
    if P < 0:
        raise ValueError("P must be >= 0")
    hs = _shifted_h0(chain)
    b1, b2 = _mod_arrays(mod)
    om, op, cond, p = reduce_batch(hs, np.asarray(omega - chain.omega_ref), mod.omega_m, b1, b2, int(P))
    if P > 0:
        _raise_if_singular(cond, p)
    return SidebandReduction(om, op, float(omega), int(P))


def _s_fixed(chain, mod, omega, P):
    red = sideband_reduction(chain, mod, omega, P)
    delta = np.asarray(omega - chain.omega_ref, dtype=float)
    s, cond = scattering_from_heff(chain, _shifted_h0(chain) + red.O_minus + red.O_plus, delta)
    if not float(cond) < COND_LIMIT:
        raise SingularLevel(0, float(cond))
    return s


def relative_change(new, old):
    scale = np.max(np.abs(new), axis=(-2, -1))
    diff = np.max(np.abs(new - old), axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, diff / scale, diff)
    return rel


def adaptive(evaluate, trunc: Truncation):
    """Grow P until consecutive results differ by less than ``trunc.tol``.

    ``evaluate(P)`` returns a (..., 2, 2) or (..., 4, 4) array. Returns the
    value at the larger order together with that order.
    """
    prev = evaluate(0)
    for P in range(1, trunc.cap + 1):
        cur = evaluate(P)
        if float(relative_change(cur, prev)) < trunc.tol:
            return cur, P
        prev = cur
    raise NoConvergence(f"truncation did not converge to tol={trunc.tol} within P={trunc.cap}")


def scattering_matrix(chain: ChainModel, mod: Modulation, omega: float, trunc: Truncation) -> ScatteringResult:
    if trunc.mode == "fixed":
        s = _s_fixed(chain, mod, omega, trunc.P)
        P_used = trunc.P
    else:
        s, P_used = adaptive(lambda P: _s_fixed(chain, mod, omega, P), trunc)
    s = np.array(s)
    if not np.all(np.isfinite(s)):
        raise NumericalError(f"non-finite scattering matrix at omega={omega}")
    return ScatteringResult(float(omega), s, int(P_used))


def banded_matrix(chain: ChainModel, mod: Modulation, omega: float, P: int) -> np.ndarray:
    """Truncated ``omega I - H`` over sidebands ordered +P ... 0 ... -P (shifted frame)."""
    hs = _shifted_h0(chain)
    b1, b2 = _mod_arrays(mod)
    B = np.diag([b1, b2])
    Bd = B.conj().T
    delta = omega - chain.omega_ref
    n = 2 * P + 1
    m = np.zeros((2 * n, 2 * n), dtype=complex)
    for i, q in enumerate(range(P, -P - 1, -1)):
        sl = slice(2 * i, 2 * i + 2)
        # band at omega + q*omega_m sees H_q = H0 - q*omega_m on its diagonal
        m[sl, sl] = delta * np.eye(2) - (hs - q * mod.omega_m * np.eye(2))
        if i + 1 < n:
            nxt = slice(2 * i + 2, 2 * i + 4)
            m[sl, nxt] = -B  # coupling to the next lower band
            m[nxt, sl] = -Bd
    return m


def banded_solve(chain: ChainModel, mod: Modulation, omega: float, P: int) -> ScatteringResult:
    m = banded_matrix(chain, mod, omega, P)
    k = _k_matrix(chain)
    n = 2 * P + 1
    rhs = np.zeros((2 * n, 4), dtype=complex)
    rhs[2 * P : 2 * P + 2, :] = -1j * k.T
    cond = np.linalg.cond(m)
    if not cond < COND_LIMIT:
        raise SingularSystem(f"banded system singular at omega={omega} (cond={cond:.3e})")
    alpha = np.linalg.solve(m, rhs)
    a0 = alpha[2 * P : 2 * P + 2, :]
    s = PORT_SWAP + (-k.conj()) @ a0
    return ScatteringResult(float(omega), s, int(P))


@dataclass(frozen=True)
class SpectrumRow:
    omega: float
    result: ScatteringResult | None
    status: str = "ok"


def spectrum(chain, mod, omega_grid, trunc, threads=1):
    """Per-point scattering over a strictly increasing grid; failures are recorded per row."""
    grid = [float(w) for w in omega_grid]
    if not grid:
        raise ValueError("omega grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("omega grid must be strictly increasing")

    def one(w):
        try:
            return SpectrumRow(w, scattering_matrix(chain, mod, w, trunc))
        except NumericalError as exc:
            return SpectrumRow(w, None, f"{type(exc).__name__}: {exc}")

    from .parallel import ordered_map

    return ordered_map(one, grid, threads)
