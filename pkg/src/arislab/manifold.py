"""Riemannian conjugate gradient on the product-of-circles manifold.

Minimizes f(t) = t^H Q t - 2 Re{t^H q} over unit-modulus complex vectors.
Polak-Ribiere+ with clamping and descent reset, Armijo backtracking on the
retracted step, projection-based vector transport.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuadraticObjective:
    """f(t) = t^H Q t - 2 Re{t^H q} with Hermitian PSD Q."""

    q_mat: np.ndarray  # (N, N)
    q_vec: np.ndarray  # (N,)

    def value(self, t: np.ndarray) -> float:
        return float((np.vdot(t, self.q_mat @ t) - 2.0 * np.vdot(t, self.q_vec)).real)

    def validate(self, tol: float = 1e-10) -> None:
        herm = np.linalg.norm(self.q_mat - self.q_mat.conj().T)
        if herm >= tol * max(1.0, np.linalg.norm(self.q_mat)):
            raise ValueError("objective matrix is not Hermitian")
        eig = np.linalg.eigvalsh(0.5 * (self.q_mat + self.q_mat.conj().T))
        floor = -1e-9 * max(1.0, float(np.abs(eig).max()))
        if eig.min() < floor:
            raise ValueError("objective matrix is not positive semidefinite")


def euclid_grad(obj: QuadraticObjective, t: np.ndarray) -> np.ndarray:
    """Euclidean gradient 2(Q t - q) of the real objective."""
    return 2.0 * (obj.q_mat @ t - obj.q_vec)


def project_tangent(g: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Remove the radial component: g - Re{g o t*} o t."""
    return g - (g * np.conj(t)).real * t


def transport(zeta: np.ndarray, t_new: np.ndarray) -> np.ndarray:
    """Move a direction to the tangent space at t_new (same projection)."""
    return zeta - (zeta * np.conj(t_new)).real * t_new


def retract(t: np.ndarray, step: np.ndarray, max_retries: int = 8) -> np.ndarray:
    """Element-wise renormalization of t + step; halves the step if an entry
    would land on the origin (measure-zero, but guarded)."""
    for _ in range(max_retries):
        moved = t + step
        mags = np.abs(moved)
        if np.all(mags > 0.0):
            return moved / mags
        step = 0.5 * step
    raise FloatingPointError("retraction hit the origin repeatedly")


def armijo_step(obj: QuadraticObjective, t: np.ndarray, zeta: np.ndarray,
                f0: float, slope: float, xi0: float = 1.0, c1: float = 1e-4,
                shrink: float = 0.5, max_halve: int = 50):
    """Backtracking line search along the retracted ray.

    Returns (xi, t_new, f_new); xi = 0 signals stagnation.  `slope` is the
    real inner product Re<grad f, zeta> and must be negative.
    """
    xi = xi0
    for _ in range(max_halve):
        t_new = retract(t, xi * zeta)
        f_new = obj.value(t_new)
        if f_new <= f0 + c1 * xi * slope:
            return xi, t_new, f_new
        xi *= shrink
    return 0.0, t, f0


@dataclass
class RcgInfo:
    iterations: int = 0
    f_trace: list = field(default_factory=list)
    grad_norm: float = math.inf
    converged: bool = False


def rcg_minimize(obj: QuadraticObjective, t0: np.ndarray, grad_tol: float | None = None,
                 max_iter: int = 200, n_starts: int = 1) -> tuple[np.ndarray, RcgInfo]:
    """Minimize the quadratic on the circle product starting from t0.

    Every iterate is unit-modulus; f is non-increasing; stops when the
    Riemannian gradient norm falls below grad_tol (default relative to
    1 + |f(t0)|) or on stagnation.  With n_starts > 1, additional runs from
    deterministic phase-shifted starts cover other basins and the best
    result wins (the t0 run is always among the candidates).
    """
    if n_starts > 1:
        best_t, best_info = rcg_minimize(obj, t0, grad_tol, max_iter)
        n = np.asarray(t0).shape[0]
        for k in range(1, n_starts):
            shift = np.random.default_rng(1000 + k).uniform(0.0, 2.0 * np.pi, n)
            cand_t, cand_info = rcg_minimize(obj, np.asarray(t0) * np.exp(1j * shift),
                                             grad_tol, max_iter)
            if cand_info.f_trace[-1] < best_info.f_trace[-1]:
                best_t, best_info = cand_t, cand_info
        return best_t, best_info
    t = np.asarray(t0, dtype=complex)
    t = t / np.abs(t)
    f = obj.value(t)
    if grad_tol is None:
        grad_tol = 1e-6 * (1.0 + abs(f))
    info = RcgInfo(f_trace=[f])
    grad = project_tangent(euclid_grad(obj, t), t)
    zeta = -grad
    xi_prev = 1.0
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        info.grad_norm = gnorm
        if gnorm <= grad_tol:
            info.converged = True
            break
        slope = float((np.conj(grad) * zeta).real.sum())
        if slope >= 0.0:  # not a descent direction: reset to steepest descent
            zeta = -grad
            slope = -gnorm ** 2
        xi0 = min(1.0, max(4.0 * xi_prev, 1e-10))
        xi, t_new, f_new = armijo_step(obj, t, zeta, f, slope, xi0=xi0)
        if xi == 0.0:
            if np.array_equal(zeta, -grad):
                break  # stagnated along steepest descent
            zeta = -grad
            slope = -gnorm ** 2
            xi, t_new, f_new = armijo_step(obj, t, zeta, f, slope, xi0=1.0)
            if xi == 0.0:
                break
        xi_prev = xi
        grad_new = project_tangent(euclid_grad(obj, t_new), t_new)
        # Polak-Ribiere+ with the old gradient transported to the new point
        g_old_moved = transport(grad, t_new)
        denom = gnorm ** 2
        chi = float((np.conj(grad_new) * (grad_new - g_old_moved)).real.sum()) / denom
        chi = max(0.0, chi)
        zeta = -grad_new + chi * transport(zeta, t_new)
        t, f, grad = t_new, f_new, grad_new
        info.iterations = it + 1
        info.f_trace.append(f)
    return t, info
