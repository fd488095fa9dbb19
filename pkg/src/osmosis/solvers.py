"""Time integrators for ``u' = A u``.

Three schemes are provided:

* ``explicit``: forward Euler, stable and positivity preserving for
  ``tau <= check_explicit_bound(d)``.
* ``implicit``: backward Euler, ``(I - tau A) u+ = u`` solved matrix-free
  with Jacobi-preconditioned BiCGStab.
* ``aos``: additive operator splitting,
  ``u+ = 1/2 [(I - 2 tau A1)^-1 + (I - 2 tau A2)^-1] u``, using per-line
  tridiagonal LU factors computed once and reused for every step.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, bicgstab

from .discretization import apply_operator, assemble_directional
from .errors import ConfigError, ConvergenceError, ExplicitStabilityError, ShapeMismatchError
from .grid import DriftField
from .tridiag import TridiagonalLU, factorize

__all__ = [
    "DirectionalFactors",
    "Observer",
    "SCHEMES",
    "SolverConfig",
    "check_explicit_bound",
    "evolve",
    "factorize_aos",
    "operator_diagonal",
    "positivity_preserving",
    "step_aos",
    "step_explicit",
    "step_implicit",
]

log = logging.getLogger(__name__)

Scheme = Literal["explicit", "implicit", "aos"]
SCHEMES: tuple[str, ...] = ("explicit", "implicit", "aos")

#: ``observer(step, mean, sup_change)``; a truthy return stops the evolution early.
Observer = Callable[[int, float, float], Optional[bool]]


@dataclass(frozen=True)
class SolverConfig:
    scheme: Scheme = "aos"
    tau: float = 1e3
    T: float = 1e5
    tol: float = 1e-10
    max_iter: int = 2000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigError(f"tau must be positive and finite, got {self.tau}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError(f"T must be positive and finite, got {self.T}")
        if self.T < self.tau * (1 - 1e-12):
            raise ConfigError(f"T={self.T:g} is smaller than tau={self.tau:g}")
        if not self.tol > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iter}")

    @property
    def n_steps(self) -> int:
        """``ceil(T / tau)``, ignoring rounding noise in the ratio."""
        ratio = self.T / self.tau
        nearest = round(ratio)
        if abs(ratio - nearest) <= 1e-9 * max(1.0, nearest):
            return max(1, int(nearest))
        return math.ceil(ratio)


def operator_diagonal(d: DriftField) -> np.ndarray:
    """Per-pixel diagonal entry of ``A``."""
    main1 = assemble_directional(d, "horizontal").main
    main2 = assemble_directional(d, "vertical").main.T
    return main1 + main2


def positivity_preserving(d: DriftField) -> bool:
    """True when every off-diagonal of ``A`` is nonnegative (``|d| h <= 2``)."""
    lim = 2.0 / d.h
    return bool((np.abs(d.d1) <= lim).all() and (np.abs(d.d2) <= lim).all())


def check_explicit_bound(d: DriftField) -> float:
    """Largest ``tau`` keeping the diagonal of ``I + tau A`` nonnegative."""
    worst = float(np.abs(operator_diagonal(d)).max())
    return math.inf if worst == 0 else 1.0 / worst


def step_explicit(u: np.ndarray, d: DriftField, tau: float, tau_max: float | None = None) -> np.ndarray:
    """Forward Euler step ``u + tau A u``.

    ``tau_max`` may be passed to skip recomputing the bound every step.
    """
    if tau_max is None:
        tau_max = check_explicit_bound(d)
    if tau > tau_max:
        raise ExplicitStabilityError(tau, tau_max)
    return u + tau * apply_operator(d, u)


class _BackwardEuler:
    """Matrix-free ``I - tau A`` with its Jacobi preconditioner."""

    def __init__(self, d: DriftField, tau: float):
        self.d = d
        self.tau = tau
        n = d.shape[0] * d.shape[1]
        inv_diag = (1.0 / (1.0 - tau * operator_diagonal(d))).ravel()
        self.op = LinearOperator((n, n), matvec=self._matvec, dtype=np.float64)
        self.precond = LinearOperator((n, n), matvec=lambda r: inv_diag * r.ravel(), dtype=np.float64)

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        u = x.reshape(self.d.shape)
        return (u - self.tau * apply_operator(self.d, u)).ravel()

    def solve(self, u: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
        b = np.asarray(u, dtype=np.float64).ravel()
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros(self.d.shape)
        x = b.copy()
        used = 0
        # scipy checks its recurrence residual; restart until the true one meets tol
        while True:
            res = np.linalg.norm(b - self.op.matvec(x)) / bnorm
            if res <= tol:
                return x.reshape(self.d.shape)
            if used >= max_iter:
                raise ConvergenceError(res, used)
            count = [0]

            def _tick(_xk):
                count[0] += 1

            x, _info = bicgstab(
                self.op, b, x0=x, rtol=0.0, atol=0.5 * tol * bnorm,
                maxiter=max_iter - used, M=self.precond, callback=_tick,
            )
            if count[0] == 0:
                # breakdown without progress
                res = np.linalg.norm(b - self.op.matvec(x)) / bnorm
                if res <= tol:
                    return x.reshape(self.d.shape)
                raise ConvergenceError(res, used)
            used += count[0]


def step_implicit(u: np.ndarray, d: DriftField, tau: float, tol: float = 1e-10, max_iter: int = 2000) -> np.ndarray:
    """Backward Euler step, solved to relative residual ``tol``."""
    if not tol > 0:
        raise ConfigError(f"tolerance must be positive, got {tol}")
    if np.shape(u) != d.shape:
        raise ShapeMismatchError(f"state {np.shape(u)} does not match drift grid {d.shape}")
    return _BackwardEuler(d, tau).solve(u, tol, max_iter)


@dataclass(frozen=True, eq=False)
class DirectionalFactors:
    """Line factorizations of ``I - 2 tau A1`` (rows) and ``I - 2 tau A2`` (columns)."""

    horizontal: TridiagonalLU
    vertical: TridiagonalLU
    tau: float
    shape: tuple[int, int]
    monotone: bool

    def solve_horizontal(self, u: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        return self.horizontal.solve(u, out)

    def solve_vertical(self, u: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        return self.vertical.solve(u, out)


def factorize_aos(d: DriftField, tau: float) -> DirectionalFactors:
    """Factor both directional resolvents once for a fixed ``tau``.

    ``monotone`` records whether both shifted matrices have nonpositive
    off-diagonals; together with their unit column sums this makes the
    resolvents nonnegative, so AOS then maps nonnegative images to
    nonnegative images.
    """
    if not tau > 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    parts = {}
    for axis in ("horizontal", "vertical"):
        lower, main, upper = assemble_directional(d, axis).shifted(tau)
        # vertical lines are image columns; factor them in place
        parts[axis] = factorize(lower, main, upper, axis=axis, columns=axis == "vertical")
    monotone = positivity_preserving(d)
    if not monotone:
        log.warning("drift exceeds 2/h on some faces; AOS steps may not preserve nonnegativity")
    return DirectionalFactors(parts["horizontal"], parts["vertical"], float(tau), d.shape, monotone)


def step_aos(
    u: np.ndarray,
    factors: DirectionalFactors,
    out: np.ndarray | None = None,
    work: np.ndarray | None = None,
) -> np.ndarray:
    """One AOS step: average of the two directional implicit solves.

    ``out`` receives the result and ``work`` is scratch for the vertical
    sweep; both are optional preallocated buffers that must not overlap
    ``u``.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != factors.shape:
        raise ShapeMismatchError(f"state {u.shape} does not match factors for {factors.shape}")
    out = factors.solve_horizontal(u, out)
    return factors.vertical.solve_average(u, out, work)


def evolve(
    f: np.ndarray,
    d: DriftField,
    config: SolverConfig,
    observer: Observer | None = None,
) -> np.ndarray:
    """Run ``config.n_steps`` steps of the chosen scheme from ``f``."""
    u = np.array(f, dtype=np.float64)
    if u.shape != d.shape:
        raise ShapeMismatchError(f"initial state {u.shape} does not match drift grid {d.shape}")
    tau = config.tau
    if config.scheme == "aos":
        factors = factorize_aos(d, tau)
        # state ping-pongs between two buffers; a third holds the vertical solve
        buffers = [u, np.empty_like(u)]
        work = np.empty_like(u)

        def step(x):
            out = buffers[0] if buffers[0] is not x else buffers[1]
            return step_aos(x, factors, out, work)

    elif config.scheme == "explicit":
        tau_max = check_explicit_bound(d)
        if tau > tau_max:
            raise ExplicitStabilityError(tau, tau_max)
        step = lambda x: step_explicit(x, d, tau, tau_max)  # noqa: E731
    else:
        system = _BackwardEuler(d, tau)
        step = lambda x: system.solve(x, config.tol, config.max_iter)  # noqa: E731

    diff = np.empty_like(u) if observer is not None else None
    for k in range(1, config.n_steps + 1):
        nxt = step(u)
        if observer is None:
            u = nxt
            continue
        np.subtract(nxt, u, out=diff)
        change = float(np.abs(diff, out=diff).max())
        u = nxt
        if observer(k, float(u.mean()), change):
            log.debug("observer stopped evolution after %d steps", k)
            break
    return u
