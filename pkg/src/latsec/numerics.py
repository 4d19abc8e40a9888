"""Small dense linear algebra and fixed-step RK4 integration.

Everything here works on tiny systems (2 states, at most 4x4 Rosenbrock
matrices), so the routines favour transparency over generality.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_RANK_TOL = 1e-9


class NonFiniteError(ArithmeticError):
    """Raised when an integrated state stops being finite."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"state became non-finite at step {step}")


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @classmethod
    def from_duration(cls, duration: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        return cls(t0=t0, dt=dt, n_steps=int(round(duration / dt)))

    def time(self, k: int) -> float:
        return self.t0 + k * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps) * self.dt

    def index_of(self, t: float) -> int:
        """Grid index nearest to ``t``."""
        return int(round((t - self.t0) / self.dt))


def as_mat2(m) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return arr


def eig2x2(m) -> tuple[complex, complex]:
    """Both eigenvalues of a real 2x2 matrix, sorted by (real, imag)."""
    (a, b), (c, d) = as_mat2(m)
    half_tr = 0.5 * (a + d)
    # ((a-d)/2)^2 + bc avoids cancellation in tr^2/4 - det
    disc = (0.5 * (a - d)) ** 2 + b * c
    root = cmath.sqrt(disc) if disc < 0 else complex(math.sqrt(disc), 0.0)
    l1 = complex(half_tr, 0.0) - root
    l2 = complex(half_tr, 0.0) + root
    return tuple(sorted((l1, l2), key=lambda z: (z.real, z.imag)))


def _as_cmat(m) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(m, dtype=complex))
    if arr.ndim != 2 or min(arr.shape) < 1:
        raise ValueError(f"expected a non-empty matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return arr


def rank_with_tol(m, tol: float = DEFAULT_RANK_TOL) -> int:
    """Numerical rank by row reduction with partial pivoting.

    A pivot is accepted iff its magnitude exceeds ``tol`` times the largest
    entry magnitude of the original matrix.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    work = _as_cmat(m).copy()
    scale = float(np.max(np.abs(work)))
    if scale == 0.0:
        return 0
    threshold = tol * scale
    rows, cols = work.shape
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        pivot_row = rank + int(np.argmax(np.abs(work[rank:, col])))
        if abs(work[pivot_row, col]) <= threshold:
            continue
        if pivot_row != rank:
            work[[rank, pivot_row]] = work[[pivot_row, rank]]
        below = work[rank + 1:, col] / work[rank, col]
        work[rank + 1:, :] -= np.outer(below, work[rank, :])
        work[rank + 1:, col] = 0.0
        rank += 1
    return rank


def null_direction(m, tol: float = DEFAULT_RANK_TOL) -> Optional[np.ndarray]:
    """One unit-norm right null vector, or ``None`` at full column rank.

    The rank decision comes from :func:`rank_with_tol`; the direction itself
    is the right singular vector of the smallest singular value. The phase is
    fixed so the largest-magnitude component is real and positive.
    """
    arr = _as_cmat(m)
    if rank_with_tol(arr, tol) >= arr.shape[1]:
        return None
    _, _, vh = np.linalg.svd(arr)
    v = vh[-1].conj()
    lead = v[int(np.argmax(np.abs(v)))]
    v = v * (abs(lead) / lead)
    return v / np.linalg.norm(v)


def det_cofactor(m) -> complex:
    """Determinant by Laplace expansion along the first row.

    Deliberately independent of any factorisation; only meant for the
    tiny matrices used here.
    """
    arr = _as_cmat(m)
    n, n2 = arr.shape
    if n != n2:
        raise ValueError("determinant needs a square matrix")
    if n == 1:
        return complex(arr[0, 0])
    total = 0j
    for j in range(n):
        if arr[0, j] == 0:
            continue
        minor = np.delete(arr[1:], j, axis=1)
        total += (-1) ** j * arr[0, j] * det_cofactor(minor)
    return total


def expm2x2(m, t: float = 1.0) -> np.ndarray:
    """``exp(m * t)`` for a real 2x2 matrix in closed form.

    Uses ``exp(At) = e^{st} (cosh(qt) I + sinh(qt)/q (A - sI))`` with
    ``s = tr/2`` and ``q^2 = s^2 - det``; the ``sinh(qt)/q`` factor falls back
    to its series when ``qt`` is tiny.
    """
    A = as_mat2(m)
    s = 0.5 * (A[0, 0] + A[1, 1])
    q2 = (0.5 * (A[0, 0] - A[1, 1])) ** 2 + A[0, 1] * A[1, 0]
    q = cmath.sqrt(q2)
    qt = q * t
    if abs(qt) < 1e-4:
        sinhc = t * (1.0 + qt * qt / 6.0 + qt ** 4 / 120.0)
    else:
        sinhc = cmath.sinh(qt) / q
    cosh = cmath.cosh(qt)
    out = math.exp(s * t) * (cosh.real * np.eye(2) + sinhc.real * (A - s * np.eye(2)))
    return out


# --- integration -----------------------------------------------------------

Deriv = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, x: np.ndarray,
             dt: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step2(f: Callable[[float, float, float], tuple[float, float]], t: float,
              x: tuple[float, float], dt: float) -> tuple[float, float]:
    """RK4 step for a two-state system written with plain floats.

    Same tableau as :func:`rk4_step`; the simulator uses this variant in its
    inner loop because scalar arithmetic beats tiny numpy arrays by a wide
    margin.
    """
    x1, x2 = x
    h2 = 0.5 * dt
    a1, a2 = f(t, x1, x2)
    b1, b2 = f(t + h2, x1 + h2 * a1, x2 + h2 * a2)
    c1, c2 = f(t + h2, x1 + h2 * b1, x2 + h2 * b2)
    d1, d2 = f(t + dt, x1 + dt * c1, x2 + dt * c2)
    s = dt / 6.0
    return (x1 + s * (a1 + 2.0 * b1 + 2.0 * c1 + d1),
            x2 + s * (a2 + 2.0 * b2 + 2.0 * c2 + d2))


def integrate_rk4(deriv: Deriv, x0: Sequence[float], inputs: Callable[[float], np.ndarray],
                  grid: TimeGrid) -> np.ndarray:
    """Integrate ``x' = deriv(t, x, u(t))`` on ``grid``.

    Returns an ``(n_steps + 1, n)`` array holding ``x0`` followed by the
    state after each step. ``inputs`` is sampled at the RK4 stage times.
    """
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((grid.n_steps + 1, x.size))
    out[0] = x

    def f(t, state):
        return np.asarray(deriv(t, state, inputs(t)), dtype=float)

    for k in range(grid.n_steps):
        x = rk4_step(f, grid.time(k), x, grid.dt)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(k + 1)
        out[k + 1] = x
    return out
