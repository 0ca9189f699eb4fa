"""Norms, identities and estimate ratios computed from states and runs.

Everything here is a pure function of spectral coefficient arrays or of
a completed trajectory.  Time integrals over diagnostic streams use the
composite trapezoid rule on the per-step samples; the slice-norm
quantities combine an L² integral over the transverse direction at a
fixed x1 with an outer L² over (time, x1).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .spectral import (
    Grid,
    dealias,
    derivative,
    divergence_rel,
    gradient,
    leray_project,
    transform_inverse,
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Roll-up of the per-snapshot diagnostic quantities.

    Quantities that are not computed for a given snapshot are NaN.
    """

    time: float
    sobolev_m: float
    dissipation_cum: float
    energy_residual: float
    div_max: float
    linf_slab: float = math.nan
    bilinear_q: float = math.nan
    pressure_ratio: float = math.nan


def sobolev_norm(grid: Grid, coeffs: np.ndarray, m: int) -> float:
    """H^m norm (Σ (1+|ξ|²)^m |f̂|²)^{1/2}, summed over leading components."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    weight = (1.0 + grid.k_sq) ** m
    return float(np.sqrt(np.sum(weight * np.abs(coeffs) ** 2)))


def grad_sobolev_norm(grid: Grid, coeffs: np.ndarray, m: int,
                      order: int = 1) -> float:
    """H^m norm of the full derivative stack ∇^order f, via |ξ|^(2·order) weights.

    Uses Σ_{|stack|} |ξ^stack|² = |ξ|^(2·order), so no derivative arrays are
    materialized.
    """
    weight = grid.k_sq**order * (1.0 + grid.k_sq) ** m
    return float(np.sqrt(np.sum(weight * np.abs(coeffs) ** 2)))


def pair_sobolev_norm(grid: Grid, u: np.ndarray, h: np.ndarray, m: int) -> float:
    """Joint norm ‖(u,h)‖_m."""
    return float(np.hypot(sobolev_norm(grid, u, m), sobolev_norm(grid, h, m)))


def elsasser(state):
    """Characteristic combinations (u + h, u − h); both divergence-free."""
    return state.u + state.h, state.u - state.h


def _multi_indices(j: int):
    """All 2D multi-indices with |α| ≤ j."""
    return [
        (a1, a2)
        for a1, a2 in itertools.product(range(j + 1), repeat=2)
        if a1 + a2 <= j
    ]


def anisotropic_norm_profile(grid: Grid, coeffs: np.ndarray, j: int) -> np.ndarray:
    """Slice norms ‖f(x1, ·)‖_{H^j} for every grid line x1, as an array.

    The derivative sum runs over all multi-indices |α| ≤ j in both
    variables (not only transverse ones); each ∂^α f is evaluated on the
    full grid and its squared L² integral over the transverse coordinate
    is taken at fixed x1.  Components (leading axes of ``coeffs``) are
    summed in quadrature.
    """
    if j < 0:
        raise ValueError(f"j must be >= 0, got {j}")
    flat = coeffs.reshape(-1, grid.n_points, grid.n_points)
    acc = np.zeros(grid.n_points)
    for alpha in _multi_indices(j):
        for comp in flat:
            deriv_phys = transform_inverse(grid, derivative(grid, comp, alpha))
            acc += np.sum(np.abs(deriv_phys) ** 2, axis=1) * grid.dx
    return np.sqrt(acc)


def anisotropic_norm(grid: Grid, coeffs: np.ndarray, j: int, x1_index: int) -> float:
    """Slice norm ‖f(x1, ·)‖_{H^j} at one x1 grid index."""
    if not 0 <= x1_index < grid.n_points:
        raise IndexError(f"x1_index {x1_index} out of range for N={grid.n_points}")
    return float(anisotropic_norm_profile(grid, coeffs, j)[x1_index])


def bilinear_quantity(trajectory, m: int, variant: str) -> float:
    """Mixed space-time norm of products of Elsässer slice norms.

    variant "grad_grad":
        ‖ ‖∇Λ₊‖_{H^{m−2}_slice}·‖∇Λ₋‖_{H^{m−1}_slice} + (swap) ‖_{L²(t,x1)}
    variant "field_grad":
        ‖ ‖Λ₊‖_{H^{m−1}_slice}·‖∇Λ₋‖_{H^{m−1}_slice} + (swap) ‖_{L²(t,x1)}

    Trapezoid in time over the snapshots, Riemann sum in x1.  Symmetric
    under exchanging the two Elsässer fields by construction.
    """
    if variant not in ("grad_grad", "field_grad"):
        raise ValueError(f"unknown variant {variant!r}")
    snaps = trajectory.snapshots
    if len(snaps) < 2:
        raise ValueError("need at least 2 snapshots for the time integral")
    if m < 3:
        raise ValueError(f"m must be >= 3, got {m}")
    grid = trajectory.grid
    times = np.array([s.state.time for s in snaps])
    g_sq = np.empty((len(snaps), grid.n_points))
    for i, snap in enumerate(snaps):
        lam_plus = snap.state.u + snap.state.h
        lam_minus = snap.state.u - snap.state.h
        grad_plus = np.concatenate([gradient(grid, c) for c in lam_plus])
        grad_minus = np.concatenate([gradient(grid, c) for c in lam_minus])
        if variant == "grad_grad":
            a_plus = anisotropic_norm_profile(grid, grad_plus, m - 2)
            a_minus = anisotropic_norm_profile(grid, grad_minus, m - 2)
        else:
            a_plus = anisotropic_norm_profile(grid, lam_plus, m - 1)
            a_minus = anisotropic_norm_profile(grid, lam_minus, m - 1)
        b_plus = anisotropic_norm_profile(grid, grad_plus, m - 1)
        b_minus = anisotropic_norm_profile(grid, grad_minus, m - 1)
        profile = a_plus * b_minus + a_minus * b_plus
        g_sq[i] = profile**2
    inner = np.sum(g_sq, axis=1) * grid.dx  # Riemann sum over x1
    return float(np.sqrt(np.trapezoid(inner, times)))


def energy_residual(trajectory) -> float:
    """Worst relative defect of the energy balance along the run.

    The balance states that ‖u‖₀² + ‖h‖₀² plus twice the ε-weighted
    cumulative dissipation stays equal to its initial value.  The
    dissipation integral is the composite trapezoid over the per-step
    stream.  Returns max_t |E(t) + D(t) − E(0)| / E(0); exactly 0 for the
    zero trajectory.
    """
    times = trajectory.step_times
    energy = trajectory.step_energy_sq
    diss = trajectory.step_dissipation0
    e0 = energy[0]
    if e0 == 0.0:
        return 0.0 if np.all(energy == 0.0) else math.inf
    eps = trajectory.config.eps
    cumulative = np.concatenate(
        [[0.0], np.cumsum(np.diff(times) * 0.5 * (diss[1:] + diss[:-1]))]
    )
    residual = np.abs(energy + 2.0 * eps * cumulative - e0)
    return float(np.max(residual) / e0)


def pressure_ratio(grid: Grid, u: np.ndarray, h: np.ndarray, i: int) -> float:
    """‖∇q‖_i over the product bound ‖h‖_i‖∇h‖_i + ‖u‖_i‖∇u‖_i.

    ∇q is the gradient part that the divergence-free projection removes
    from h·∇h − u·∇u.  Returns NaN when the bound is zero (nothing to
    compare against).
    """
    if i < 2:
        raise ValueError(f"i must be >= 2, got {i}")
    ud = dealias(grid, u)
    hd = dealias(grid, h)
    u_phys = np.stack([transform_inverse(grid, c).real for c in ud])
    h_phys = np.stack([transform_inverse(grid, c).real for c in hd])
    du = [np.stack([transform_inverse(grid, d).real
                    for d in gradient(grid, c)]) for c in ud]
    dh = [np.stack([transform_inverse(grid, d).real
                    for d in gradient(grid, c)]) for c in hd]
    from .spectral import transform_forward

    source = np.empty_like(u)
    for comp in range(2):
        phys = (
            h_phys[0] * dh[comp][0] + h_phys[1] * dh[comp][1]
            - u_phys[0] * du[comp][0] - u_phys[1] * du[comp][1]
        )
        source[comp] = dealias(grid, transform_forward(grid, phys))
    grad_q = source - leray_project(grid, source)
    numer = sobolev_norm(grid, grad_q, i)
    denom = (
        sobolev_norm(grid, h, i) * grad_sobolev_norm(grid, h, i)
        + sobolev_norm(grid, u, i) * grad_sobolev_norm(grid, u, i)
    )
    if denom == 0.0:
        return math.nan
    return numer / denom


def sup_norm_slab(grid: Grid, coeffs: np.ndarray, l: int, radius: float) -> float:
    """Max pointwise Euclidean magnitude over the slab |x1 − L/2| < l·radius.

    ``coeffs`` may carry any number of leading component axes; the
    magnitude is the root of the sum of squared components at each grid
    point.
    """
    if not l * radius < grid.box_length / 2:
        raise ValueError(
            f"slab half-width {l * radius:g} exceeds half box {grid.box_length / 2:g}"
        )
    flat = coeffs.reshape(-1, grid.n_points, grid.n_points)
    mag_sq = np.zeros((grid.n_points, grid.n_points))
    for comp in flat:
        mag_sq += transform_inverse(grid, comp).real ** 2
    x = np.arange(grid.n_points) * grid.dx
    inside = np.abs(x - grid.box_length / 2.0) < l * radius
    return float(np.sqrt(np.max(mag_sq[inside, :])))


def sup_norm_global(grid: Grid, coeffs: np.ndarray) -> float:
    """Whole-box analogue of sup_norm_slab (max Euclidean magnitude)."""
    flat = coeffs.reshape(-1, grid.n_points, grid.n_points)
    mag_sq = np.zeros((grid.n_points, grid.n_points))
    for comp in flat:
        mag_sq += transform_inverse(grid, comp).real ** 2
    return float(np.sqrt(np.max(mag_sq)))


def error_norms(traj_nonlinear, traj_linear, m: int):
    """Per-snapshot difference norms between a run and its linear twin.

    Returns a list of (time, ‖∇ diff‖_{m−2}, cumulative ε·∫‖∇² diff‖²_{m−2})
    tuples, with the cumulative integral by trapezoid over the snapshot
    times.  Snapshot times and grids must match.
    """
    grid = traj_nonlinear.grid
    if traj_linear.grid != grid:
        raise ValueError("trajectories live on different grids")
    t_nl = [s.state.time for s in traj_nonlinear.snapshots]
    t_li = [s.state.time for s in traj_linear.snapshots]
    if len(t_nl) != len(t_li) or not np.allclose(t_nl, t_li, rtol=0, atol=1e-12):
        raise ValueError("snapshot times do not match")
    eps = traj_nonlinear.config.eps
    out = []
    cum = 0.0
    prev_sq = None
    prev_t = None
    for snap_nl, snap_li in zip(traj_nonlinear.snapshots, traj_linear.snapshots):
        du = snap_nl.state.u - snap_li.state.u
        dh = snap_nl.state.h - snap_li.state.h
        grad_norm = float(np.hypot(
            grad_sobolev_norm(grid, du, m - 2), grad_sobolev_norm(grid, dh, m - 2)
        ))
        hess_sq = (
            grad_sobolev_norm(grid, du, m - 2, order=2) ** 2
            + grad_sobolev_norm(grid, dh, m - 2, order=2) ** 2
        )
        t = snap_nl.state.time
        if prev_sq is not None:
            cum += 0.5 * (hess_sq + prev_sq) * (t - prev_t)
        out.append((t, grad_norm, eps * cum))
        prev_sq, prev_t = hess_sq, t
    return out


def max_divergence(grid: Grid, *fields: np.ndarray) -> float:
    """Largest relative divergence across the given vector fields."""
    return max(divergence_rel(grid, f) for f in fields)
