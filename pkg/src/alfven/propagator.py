"""Closed-form solution operator for the coupled linear system.

Per Fourier mode ξ the linearized system is a 2×2 ODE
``d/dt (û, ĥ) = A(ξ) (û, ĥ)`` with

    A(ξ) = [[−a|ξ|²,  iκξ₁],
            [ iκξ₁,  −b|ξ|²]],

a and b the two diffusivities and κ the coefficient of the ∂₁ coupling
to the background field.  exp(tA) has a closed form in terms of
cosh/sinh (or cos/sin when the discriminant goes negative) and the
entire function ψ(s) = sinh(s)/s.  This module evaluates that form in
a branch-stable, overflow-free way, provides an independent
scaling-and-squaring matrix exponential as an oracle, and exposes the
wavenumber-region decomposition of the convolution kernel used by the
small-coupling limit studies.

Conventions: the decay prefactor e^{−(a+b)t|ξ|²/2} is always folded
into the cosh/ψ factors (as e^{s−β}, e^{−s−β} with s ≤ β), so entries
never overflow even when individual factors would.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .spectral import Grid

#: |s²| below which cosh and ψ switch to their Taylor polynomials.
TAYLOR_WINDOW = 1e-4


@dataclass(frozen=True)
class PropagatorParams:
    """Diffusivities (a, b) of the two fields and ∂₁-coupling coefficient κ."""

    a: float
    b: float
    kappa: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError(f"diffusivities must be >= 0, got a={self.a}, b={self.b}")
        if not np.isfinite(self.kappa):
            raise ValueError("kappa must be finite")


@dataclass(frozen=True)
class MultiplierBlock:
    """One evaluated 2×2 multiplier: real diagonal, imaginary off-diagonal.

    The two off-diagonal entries are equal; ``b12_over_i`` stores their
    common value divided by i.  ``branch`` records which case of the
    closed form produced the entries; ``delta`` is the discriminant
    ((a−b)|ξ|²)² − 4κ²ξ₁².
    """

    b11: float
    b22: float
    b12_over_i: float
    branch: str  # "hyperbolic" (delta >= 0) or "trigonometric" (delta < 0)
    delta: float

    def as_matrix(self) -> np.ndarray:
        off = 1j * self.b12_over_i
        return np.array([[self.b11, off], [off, self.b22]], dtype=complex)


def psi(s_sq_signed):
    """ψ(s) = sinh(s)/s as a function of signed s².

    Negative arguments mean evaluation on the imaginary axis,
    ψ(iy) = sin(y)/y with y² = −s².  Inside |s²| ≤ 1e−4 the shared Taylor
    polynomial 1 + z/6 + z²/120 + z³/5040 is used (truncation < 1e−21),
    which also makes the function exactly continuous across s² = 0.
    """
    z = np.asarray(s_sq_signed, dtype=float)
    out = np.empty_like(z)
    hyp = z > TAYLOR_WINDOW
    trig = z < -TAYLOR_WINDOW
    mid = ~(hyp | trig)
    if np.any(hyp):
        s = np.sqrt(z[hyp])
        out[hyp] = np.sinh(s) / s
    if np.any(trig):
        y = np.sqrt(-z[trig])
        out[trig] = np.sin(y) / y
    if np.any(mid):
        w = z[mid]
        out[mid] = 1.0 + w / 6.0 + w**2 / 120.0 + w**3 / 5040.0
    if out.ndim == 0:
        return float(out)
    return out


def _folded_entries(beta, gamma, coupling):
    """Shared core: e^{−β}cosh(s) and e^{−β}ψ(s) with s² = γ² − coupling².

    β = (a+b)t|ξ|²/2 ≥ 0, γ = (a−b)t|ξ|²/2, coupling = κtξ₁.  Since
    |γ| ≤ β, the hyperbolic branch only ever exponentiates s−β ≤ 0 and
    −s−β ≤ 0, so no intermediate can overflow.
    """
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    coupling = np.asarray(coupling, dtype=float)
    z = gamma * gamma - coupling * coupling

    ecosh = np.empty_like(z)
    epsi = np.empty_like(z)

    hyp = z > TAYLOR_WINDOW
    trig = z < -TAYLOR_WINDOW
    mid = ~(hyp | trig)

    if np.any(hyp):
        s = np.sqrt(z[hyp])
        ep = np.exp(s - beta[hyp])
        em = np.exp(-s - beta[hyp])
        ecosh[hyp] = 0.5 * (ep + em)
        epsi[hyp] = 0.5 * (ep - em) / s
    if np.any(trig):
        y = np.sqrt(-z[trig])
        damp = np.exp(-beta[trig])
        ecosh[trig] = damp * np.cos(y)
        epsi[trig] = damp * np.sin(y) / y
    if np.any(mid):
        w = z[mid]
        damp = np.exp(-beta[mid])
        ecosh[mid] = damp * (1.0 + w / 2.0 + w**2 / 24.0 + w**3 / 720.0)
        epsi[mid] = damp * (1.0 + w / 6.0 + w**2 / 120.0 + w**3 / 5040.0)

    b11 = ecosh - gamma * epsi
    b22 = ecosh + gamma * epsi
    b12_over_i = coupling * epsi
    return b11, b22, b12_over_i, z


def symbol_block(xi, t: float, p: PropagatorParams) -> MultiplierBlock:
    """Evaluate the 2×2 multiplier at one wavevector ξ and duration t ≥ 0."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    xi = np.asarray(xi, dtype=float)
    xi_sq = float(np.sum(xi * xi))
    xi1 = float(xi[0])
    beta = 0.5 * (p.a + p.b) * t * xi_sq
    gamma = 0.5 * (p.a - p.b) * t * xi_sq
    coupling = p.kappa * t * xi1
    b11, b22, b12_over_i, _ = _folded_entries(beta, gamma, coupling)
    delta = ((p.a - p.b) * xi_sq) ** 2 - 4.0 * (p.kappa * xi1) ** 2
    branch = "hyperbolic" if delta >= 0 else "trigonometric"
    return MultiplierBlock(
        b11=float(b11), b22=float(b22), b12_over_i=float(b12_over_i),
        branch=branch, delta=delta,
    )


def symbol_arrays(grid: Grid, t: float, p: PropagatorParams):
    """Multiplier entries over the whole wavenumber lattice.

    Returns (B11, B22, B12_over_i) as (N, N) float arrays.  The coupling
    entry is odd in ξ₁, so it is zeroed on the ξ₁-Nyquist line to keep the
    multiplier Hermitian (B(−ξ) = conj B(ξ)) and real fields real.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    beta = 0.5 * (p.a + p.b) * t * grid.k_sq
    gamma = 0.5 * (p.a - p.b) * t * grid.k_sq
    coupling = np.where(grid.nyquist_x, 0.0, p.kappa * t * grid.kx)
    b11, b22, b12_over_i, _ = _folded_entries(beta, gamma, coupling)
    return b11, b22, b12_over_i


def propagate_fields(grid: Grid, u: np.ndarray, h: np.ndarray, t: float,
                     p: PropagatorParams):
    """Apply the exact linear semigroup for duration t to coefficient arrays."""
    b11, b22, b12_over_i = symbol_arrays(grid, t, p)
    off = 1j * b12_over_i
    u_new = b11 * u + off * h
    h_new = off * u + b22 * h
    return u_new, h_new


def apply_propagator(state, t: float, p: PropagatorParams):
    """Evolve a SpectralState by duration t under the exact linear flow.

    Scalar multipliers act identically on both components, so
    divergence-free fields stay divergence-free.
    """
    u_new, h_new = propagate_fields(state.grid, state.u, state.h, t, p)
    return dataclasses.replace(state, u=u_new, h=h_new, time=state.time + t)


def matrix_exponential_oracle(mat: np.ndarray) -> np.ndarray:
    """exp(A) for a 2×2 complex matrix by scaling-and-squaring + Taylor.

    Independent of the closed form above on purpose: this is the oracle
    the closed form is tested against.  Accurate to ~1e−12 relative for
    ‖A‖ up to roughly 1e3.
    """
    a = np.asarray(mat, dtype=complex)
    if a.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    norm = float(np.max(np.sum(np.abs(a), axis=1)))  # infinity norm
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
        if squarings > 60:
            raise OverflowError(f"matrix norm {norm:g} too extreme to exponentiate")
        a = a / (2.0**squarings)
    # Taylor series at scaled norm <= 0.5: term 21 is below 1e-26.
    result = np.eye(2, dtype=complex)
    term = np.eye(2, dtype=complex)
    for k in range(1, 21):
        term = term @ a / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def mode_matrix(xi, p: PropagatorParams) -> np.ndarray:
    """The per-mode generator A(ξ) whose exponential the closed form computes."""
    xi = np.asarray(xi, dtype=float)
    xi_sq = float(np.sum(xi * xi))
    off = 1j * p.kappa * xi[0]
    return np.array(
        [[-p.a * xi_sq, off], [off, -p.b * xi_sq]], dtype=complex
    )


def decay_envelope(xi, t, p: PropagatorParams):
    """Reference decay majorant e^{−min(a,b)t|ξ|²}(t|ξ|² + 1)."""
    xi = np.asarray(xi, dtype=float)
    xi_sq = np.sum(xi * xi, axis=0) if xi.ndim > 1 else float(np.sum(xi * xi))
    tk = np.asarray(t) * xi_sq
    return np.exp(-min(p.a, p.b) * tk) * (tk + 1.0)


def kernel_exponents(theta: float, n_dim: int):
    """Region exponents (d1, d2) with θ = d2 − d1(n−1) and 2·d1 + d2 < 1."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    d1 = (1.0 - theta) / 6.0
    d2 = theta + (n_dim - 1) * (1.0 - theta) / 6.0
    return d1, d2


def region_masks(grid: Grid, eps: float, theta: float, c_tilde: float):
    """Partition the wavenumber lattice into the three kernel regions.

    D1: |ξ| ≤ c̃ ε^{−d1} and c̃|ξ₁| ≥ ε^{d2}   (oscillation-dominated)
    D2: |ξ| ≤ c̃ ε^{−d1} and c̃|ξ₁| < ε^{d2}   (small first wavenumber)
    D3: |ξ| > c̃ ε^{−d1}                        (high-frequency tail)

    Raises if the lattice cannot resolve the D3 threshold, reporting the
    smallest usable ε for this grid.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    d1, d2 = kernel_exponents(theta, 2)
    radius = c_tilde * eps ** (-d1)
    xi_axis_max = np.pi * grid.n_points / grid.box_length
    if radius > xi_axis_max:
        eps_floor = (c_tilde / xi_axis_max) ** (1.0 / d1)
        raise ValueError(
            f"grid too coarse for eps={eps:g}: region radius {radius:g} exceeds "
            f"max wavenumber {xi_axis_max:g}; need eps >= {eps_floor:g}"
        )
    xi_abs = np.sqrt(grid.k_sq)
    low = xi_abs <= radius
    osc = c_tilde * np.abs(grid.kx) >= eps**d2
    return low & osc, low & ~osc, ~low


def kernel_partials(grid: Grid, x, t: float, eps: float, theta: float,
                    mu: float, nu: float, c_tilde: float = 0.1):
    """Evaluate the three kernel-region partial sums at a physical point.

    The convolution kernel of the linear semigroup (with coupling κ = 1/ε)
    is the inverse transform of the multiplier; its lattice sum is split
    exactly over the three regions, so the parts always add up to the
    full kernel.  Returns (K1, K2, K3), each a real 2×2 matrix.
    """
    if not t > 0:
        raise ValueError(f"t must be > 0, got {t}")
    masks = region_masks(grid, eps, theta, c_tilde)
    p = PropagatorParams(a=mu, b=nu, kappa=1.0 / eps)
    b11, b22, b12_over_i = symbol_arrays(grid, t, p)
    x = np.asarray(x, dtype=float)
    phase = np.exp(1j * (grid.kx * x[0] + grid.ky * x[1]))
    scale = 1.0 / grid.box_length**2
    out = []
    for mask in masks:
        ph = np.where(mask, phase, 0.0)
        k11 = float(np.real(np.sum(b11 * ph))) * scale
        k22 = float(np.real(np.sum(b22 * ph))) * scale
        k12 = float(np.real(np.sum(1j * b12_over_i * ph))) * scale
        out.append(np.array([[k11, k12], [k12, k22]]))
    return tuple(out)


def kernel_field(grid: Grid, t: float, eps: float, mu: float, nu: float,
                 mask: np.ndarray | None = None):
    """Kernel entries on the whole physical grid (optionally region-masked).

    Returns (K11, K12, K22) real arrays; used by the kernel study to take
    sup norms over x cheaply via one inverse FFT per entry.
    """
    import scipy.fft as _fft

    p = PropagatorParams(a=mu, b=nu, kappa=1.0 / eps)
    b11, b22, b12_over_i = symbol_arrays(grid, t, p)
    if mask is not None:
        b11 = np.where(mask, b11, 0.0)
        b22 = np.where(mask, b22, 0.0)
        b12_over_i = np.where(mask, b12_over_i, 0.0)
    scale = grid.n_points**2 / grid.box_length**2
    k11 = np.real(_fft.ifft2(b11)) * scale
    k22 = np.real(_fft.ifft2(b22)) * scale
    k12 = np.real(_fft.ifft2(1j * b12_over_i)) * scale
    return k11, k12, k22
