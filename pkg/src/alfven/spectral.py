"""Periodic-box discrete Fourier infrastructure.

Everything downstream (the closed-form linear propagator, the nonlinear
solver, the diagnostics) works on spectral coefficients over a square
periodic box [0, L)².  This module fixes the conventions once:

* coefficients are stored in FFT layout and normalized so that the
  spectral ℓ² norm equals the cell-area-weighted physical L² norm
  (``sum |c|² == sum |f|² * (L/N)²``), making norms resolution-stable;
* derivative multipliers zero the Nyquist mode for odd orders (its
  wavenumber sign is ambiguous);
* the 2/3 rule masks every mode with an integer index above N/3, which
  is what keeps quadratic products alias-free.

Scalar fields are complex (N, N) coefficient arrays; vector fields are
(2, N, N).  Fields representing real data are Hermitian-symmetric, and
every operation here preserves that symmetry.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft


def _safe_inverse(k_sq: np.ndarray) -> np.ndarray:
    """1/k² with zeros mapped to zero (only the mean mode has k = 0)."""
    out = np.zeros_like(k_sq)
    nonzero = k_sq > 0.0
    out[nonzero] = 1.0 / k_sq[nonzero]
    return out


@dataclass(frozen=True)
class Grid:
    """Square periodic grid and its wavenumber lattice.

    Parameters
    ----------
    n_points : int
        Points per dimension; a power of two, at least 16.
    box_length : float
        Side length L of the periodic box [0, L)².

    Derived arrays (cached, read-only):
    ``kx``, ``ky``
        Wavenumbers ξ = 2π k / L in FFT layout, shape (N, N).
    ``k_sq``
        |ξ|², shape (N, N).
    ``dealias_mask``
        Boolean mask, True where both integer indices satisfy |k| ≤ N/3.
    ``nyquist_x``, ``nyquist_y``
        Boolean masks of the Nyquist index k = −N/2 along each axis.
    ``ikx``, ``iky``
        First-derivative multipliers iξ with the Nyquist row/column zeroed.
    ``inv_k_sq``
        1/|ξ|² with the mean mode set to zero (used by the Leray projection).
    """

    n_points: int
    box_length: float

    def __post_init__(self):
        n, length = self.n_points, self.box_length
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 16, got {n}")
        if not length > 0:
            raise ValueError(f"box_length must be positive, got {length}")

        k_int = np.fft.fftfreq(n, d=1.0 / n)  # integer indices −N/2..N/2−1
        xi = 2.0 * np.pi * k_int / length
        kx, ky = np.meshgrid(xi, xi, indexing="ij")
        kmax_int = n // 3
        keep = np.abs(k_int) <= kmax_int
        mask = np.logical_and.outer(keep, keep)
        nyq = k_int == -(n // 2)
        nyquist_x = np.logical_or.outer(nyq, np.zeros(n, bool))
        nyquist_y = np.logical_or.outer(np.zeros(n, bool), nyq)
        for name, value in [
            ("kx", kx),
            ("ky", ky),
            ("k_sq", kx**2 + ky**2),
            ("dealias_mask", mask),
            ("nyquist_x", nyquist_x),
            ("nyquist_y", nyquist_y),
            # first-derivative multipliers with the Nyquist sign ambiguity
            # already zeroed, for the hot paths
            ("ikx", np.where(nyquist_x, 0.0, 1j * kx)),
            ("iky", np.where(nyquist_y, 0.0, 1j * ky)),
            ("inv_k_sq", _safe_inverse(kx**2 + ky**2)),
        ]:
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dx(self) -> float:
        """Grid spacing L/N."""
        return self.box_length / self.n_points

    @property
    def cell_area(self) -> float:
        """Quadrature weight (L/N)² of one grid cell."""
        return self.dx * self.dx

    def coordinates(self):
        """Physical coordinate arrays (x1, x2), each shape (N, N)."""
        x = np.arange(self.n_points) * self.dx
        return np.meshgrid(x, x, indexing="ij")


def make_grid(n_points: int, box_length: float) -> Grid:
    """Build a Grid; rejects non-power-of-two sizes and empty boxes."""
    return Grid(n_points, float(box_length))


def transform_forward(grid: Grid, samples: np.ndarray) -> np.ndarray:
    """Physical samples -> spectral coefficients (norm-preserving convention).

    The returned coefficients satisfy Parseval exactly:
    ``sum |c|² == sum |f|² * cell_area``.
    """
    if samples.shape[-2:] != (grid.n_points, grid.n_points):
        raise ValueError(
            f"sample shape {samples.shape} does not match grid N={grid.n_points}"
        )
    scale = grid.box_length / grid.n_points**2
    return _fft.fft2(samples) * scale


def transform_inverse(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Spectral coefficients -> complex physical samples.

    Real-data fields come back with imaginary parts at rounding level;
    callers that need real samples take ``.real`` themselves.
    """
    if coeffs.shape[-2:] != (grid.n_points, grid.n_points):
        raise ValueError(
            f"coefficient shape {coeffs.shape} does not match grid N={grid.n_points}"
        )
    scale = grid.n_points**2 / grid.box_length
    return _fft.ifft2(coeffs) * scale


def derivative(grid: Grid, coeffs: np.ndarray, multi_index) -> np.ndarray:
    """Spectral derivative ∂^α, α = (order in x1, order in x2).

    Multiplies by (iξ₁)^α₁ (iξ₂)^α₂; Nyquist modes are zeroed whenever the
    corresponding order is odd.
    """
    a1, a2 = int(multi_index[0]), int(multi_index[1])
    if a1 < 0 or a2 < 0:
        raise ValueError(f"multi_index must be nonnegative, got {multi_index}")
    out = coeffs
    if a1:
        mult = grid.ikx if a1 == 1 else (1j * grid.kx) ** a1
        if a1 % 2 and a1 != 1:
            mult = np.where(grid.nyquist_x, 0.0, mult)
        out = out * mult
    if a2:
        mult = grid.iky if a2 == 1 else (1j * grid.ky) ** a2
        if a2 % 2 and a2 != 1:
            mult = np.where(grid.nyquist_y, 0.0, mult)
        out = out * mult
    if not (a1 or a2):
        out = coeffs.copy()
    return out


def gradient(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Stack (∂₁f, ∂₂f) along a new leading axis."""
    return np.stack(
        [derivative(grid, coeffs, (1, 0)), derivative(grid, coeffs, (0, 1))]
    )


def leray_project(grid: Grid, field: np.ndarray) -> np.ndarray:
    """Project a vector field onto divergence-free fields, mode by mode.

    ŵ(ξ) ↦ (I − ξξᵀ/|ξ|²) ŵ(ξ) for ξ ≠ 0; the mean mode is unchanged.
    """
    if field.shape[0] != 2:
        raise ValueError(f"expected a 2-component field, got shape {field.shape}")
    # inv_k_sq is zero at the mean mode, so that mode passes through unchanged
    factor = (grid.kx * field[0] + grid.ky * field[1]) * grid.inv_k_sq
    out = np.empty_like(field)
    out[0] = field[0] - grid.kx * factor
    out[1] = field[1] - grid.ky * factor
    return out


def divergence_rel(grid: Grid, field: np.ndarray) -> float:
    """max|ξ·f̂| relative to max|f̂|; 0 for the zero field."""
    peak = np.max(np.abs(field))
    if peak == 0.0:
        return 0.0
    div = np.abs(grid.kx * field[0] + grid.ky * field[1])
    return float(np.max(div) / peak)


def dealias(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Zero every coefficient whose integer index exceeds N/3 on either axis."""
    return coeffs * grid.dealias_mask


def l2_norm(coeffs: np.ndarray) -> float:
    """ℓ² norm of spectral coefficients (= weighted physical L² norm)."""
    return float(np.sqrt(np.sum(np.abs(coeffs) ** 2)))


def _bump_window(grid: Grid, support_radius: float) -> np.ndarray:
    """C^∞ window in x1, identically zero for |x1 − L/2| ≥ support_radius."""
    x = np.arange(grid.n_points) * grid.dx
    s = (x - grid.box_length / 2.0) / support_radius
    inside = np.abs(s) < 1.0
    profile = np.zeros_like(s)
    with np.errstate(divide="ignore", over="ignore"):
        raw = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    profile[inside] = raw
    return profile[:, None] * np.ones(grid.n_points)[None, :]


def _stream_field(grid: Grid, rng: np.random.Generator, spectrum_width: float,
                  window: np.ndarray | None, band_limit: bool) -> np.ndarray:
    """Divergence-free field from one random stream function.

    White physical noise -> Gaussian spectral damping -> optional window
    in physical space -> perpendicular gradient (∂₂ψ, −∂₁ψ).

    Windowed draws use ψ = ∂₁(bump·noise) so that ∫ψ dx₁ ≡ 0: the stream
    function (hence both velocity components) then has an empty ξ₁ = 0
    spectral line.  That line is invariant under the x₁-coupling, so any
    x₁-average in compact data would sit in the slab forever and mask the
    small-ε decay the limit studies measure.
    """
    noise = rng.standard_normal((grid.n_points, grid.n_points))
    psi_hat = transform_forward(grid, noise)
    psi_hat *= np.exp(-grid.k_sq / spectrum_width**2)
    if band_limit:
        psi_hat = dealias(grid, psi_hat)
    if window is not None:
        psi_phys = transform_inverse(grid, psi_hat).real
        psi_hat = derivative(
            grid, transform_forward(grid, psi_phys * window), (1, 0)
        )
    return np.stack(
        [derivative(grid, psi_hat, (0, 1)), -derivative(grid, psi_hat, (1, 0))]
    )


def random_divfree_pair(grid: Grid, seed: int, spectrum_width: float,
                        target_norm: float, m: int,
                        support_radius: float | None = None):
    """Random divergence-free pair (v0, H0) with ‖(v0, H0)‖_m == target_norm.

    Each field is the perpendicular gradient of a randomly drawn stream
    function whose spectrum is damped by exp(−|ξ|²/width²).  When
    ``support_radius`` is given, the stream functions are windowed by a
    smooth compactly supported bump (and written as an x₁-derivative, so
    the fields carry no x₁-average); outside |x1 − L/2| ≥ support_radius
    the fields vanish up to spectral-interpolation leakage.  Without a
    support radius the spectrum is truncated to the dealiasing mask, which
    keeps subsequent quadratic products alias-free.

    Deterministic in ``seed``; degenerate (all-zero) draws are retried with
    seed+1 up to 8 times.
    """
    if not target_norm > 0:
        raise ValueError("target_norm must be positive")
    if not spectrum_width > 0:
        raise ValueError("spectrum_width must be positive")
    window = None
    if support_radius is not None:
        if not 0 < support_radius < grid.box_length / 2:
            raise ValueError(
                f"support_radius must lie in (0, L/2), got {support_radius}"
            )
        window = _bump_window(grid, support_radius)

    from .diagnostics import sobolev_norm  # local import: no cycle at module load

    for attempt in range(9):
        rng = np.random.default_rng(seed + attempt)
        v0 = _stream_field(grid, rng, spectrum_width, window, window is None)
        h0 = _stream_field(grid, rng, spectrum_width, window, window is None)
        v0 = leray_project(grid, v0)
        h0 = leray_project(grid, h0)
        norm = np.sqrt(
            sobolev_norm(grid, v0, m) ** 2 + sobolev_norm(grid, h0, m) ** 2
        )
        if norm > 1e-12:
            scale = target_norm / norm
            return v0 * scale, h0 * scale
    raise RuntimeError(f"degenerate random draw after 9 attempts (seed={seed})")
