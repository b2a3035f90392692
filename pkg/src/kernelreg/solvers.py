"""Iterative solvers for the restoration linear systems.

Core routines (gmres, cg, broyden) work on flat vectors through a bare
``apply(v) -> v`` callable so they can also serve as inner solvers. The
public ``solve`` wraps a SystemOperator and produces a SolveReport with
per-iteration telemetry: recurrence residual, objective theta(z), PSNR of
W z against a reference, wall seconds, and the cumulative count of heavy
operator applications (telemetry evaluations excluded via counter pause).

gmres-augmented is restarted GMRES that carries a few normalized
correction vectors across restart cycles, appending them to the Krylov
directions of the next cycle (the restarted-and-augmented family standing
in for GCROT/LGMRES). broyden is the "good Broyden" rank-one inverse
update with unit steps, limited-memory storage, and restart on breakdown.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, NumericalBreakdown
from .image import Image, psnr
from .system import SystemOperator, objective_theta

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "SolveReport",
    "solve",
    "solver_shootout",
    "gmres",
    "cg",
    "broyden",
]

METHODS = ("gmres-restarted", "gmres-augmented", "broyden", "cg")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "gmres-restarted"
    max_iterations: int = 200
    restart_length: int = 30
    relative_residual_tolerance: float = 1e-6
    augment_count: int = 3
    initial_guess: str = "zero"  # "zero" | "rhs"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown solver method '{self.method}'")
        if self.restart_length < 1:
            raise ConfigurationError("restart_length must be >= 1")
        if self.relative_residual_tolerance <= 0:
            raise ConfigurationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.initial_guess not in ("zero", "rhs"):
            raise ConfigurationError("initial_guess must be 'zero' or 'rhs'")


@dataclass
class IterationRecord:
    iteration: int
    residual: float
    objective: float
    psnr: float
    seconds: float
    op_applications: int


@dataclass
class SolveReport:
    method: str
    iterations: int = 0
    converged: bool = False
    diverged: bool = False
    final_relative_residual: float = math.nan
    operator_applications: int = 0
    wall_seconds: float = 0.0
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        for rec in reversed(self.records):
            if math.isfinite(rec.objective):
                return rec.objective
        return math.nan


def _check_finite(v: np.ndarray, iteration: int, method: str):
    if not np.all(np.isfinite(v)):
        raise NumericalBreakdown(f"{method}: non-finite iterate at iteration {iteration}")


# -- core vector-level solvers -------------------------------------------------


def gmres(apply_fn, b, x0, *, restart=30, tol=1e-6, max_iterations=200,
          augment=0, on_iteration=None):
    """Restarted GMRES; with augment > 0, prior corrections join the basis.

    Returns (x, info) where info holds converged/iterations/residual. The
    recurrence residual is confirmed against a true residual at every
    restart boundary before convergence is declared.
    """
    n = b.size
    name = "gmres-augmented" if augment else "gmres-restarted"
    bnorm = float(np.linalg.norm(b))
    scale = bnorm if bnorm > 0 else 1.0
    x = np.array(x0, dtype=np.float64, copy=True)
    corrections: deque[np.ndarray] = deque(maxlen=max(augment, 0) or None)
    it = 0
    converged = False
    rel = math.inf

    while it < max_iterations and not converged:
        r = b - apply_fn(x)
        _check_finite(r, it, name)
        rnorm = float(np.linalg.norm(r))
        rel = rnorm / scale
        if rel <= tol:
            converged = True
            break

        m = min(restart, max_iterations - it)
        k_aug = min(len(corrections), augment, m - 1) if augment else 0
        V = np.zeros((n, m + 1))
        U = np.zeros((n, m))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = rnorm
        V[:, 0] = r / rnorm
        cols = 0
        breakdown = False

        for j in range(m):
            if j < m - k_aug:
                u = V[:, j]
            else:
                u = corrections[j - (m - k_aug)]
            w = apply_fn(u)
            it += 1
            _check_finite(w, it, name)
            U[:, j] = u
            for i in range(j + 1):
                H[i, j] = float(V[:, i] @ w)
                w = w - H[i, j] * V[:, i]
            hj = float(np.linalg.norm(w))
            H[j + 1, j] = hj
            if hj > 1e-14 * max(rnorm, 1.0):
                V[:, j + 1] = w / hj
            else:
                breakdown = True  # basis closed: solution lies in the span
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = math.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                breakdown = True  # dead column; drop it from the solve
                break
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            cols = j + 1
            rel = abs(g[j + 1]) / scale
            if on_iteration is not None:
                y = np.linalg.solve(np.triu(H[:cols, :cols]), g[:cols])
                on_iteration(it, x + U[:, :cols] @ y, rel)
            if rel <= tol or breakdown or it >= max_iterations:
                break

        y = np.linalg.solve(np.triu(H[:cols, :cols]), g[:cols])
        correction = U[:, :cols] @ y
        x = x + correction
        cnorm = float(np.linalg.norm(correction))
        if augment and cnorm > 0:
            corrections.appendleft(correction / cnorm)

    r = b - apply_fn(x)
    rel = float(np.linalg.norm(r)) / scale
    converged = rel <= tol
    return x, {"converged": converged, "iterations": it,
               "final_relative_residual": rel}


def cg(apply_fn, b, x0, *, tol=1e-6, max_iterations=200, on_iteration=None):
    """Conjugate gradients for a symmetric positive (semi)definite operator."""
    bnorm = float(np.linalg.norm(b))
    scale = bnorm if bnorm > 0 else 1.0
    x = np.array(x0, dtype=np.float64, copy=True)
    r = b - apply_fn(x)
    _check_finite(r, 0, "cg")
    p = r.copy()
    rs = float(r @ r)
    it = 0
    rel = math.sqrt(rs) / scale
    converged = rel <= tol
    while it < max_iterations and not converged:
        Ap = apply_fn(p)
        it += 1
        _check_finite(Ap, it, "cg")
        curv = float(p @ Ap)
        if curv <= 0:
            break  # null-space direction; best iterate stands
        alpha = rs / curv
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = float(r @ r)
        rel = math.sqrt(rs_new) / scale
        if on_iteration is not None:
            on_iteration(it, x, rel)
        if rel <= tol:
            converged = True
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    r = b - apply_fn(x)
    rel = float(np.linalg.norm(r)) / scale
    return x, {"converged": rel <= tol, "iterations": it,
               "final_relative_residual": rel}


def broyden(apply_fn, b, x0, *, tol=1e-6, max_iterations=200, on_iteration=None):
    """Good Broyden with unit steps on the root problem A x - b = 0.

    The approximate inverse Jacobian starts at the identity and is kept as
    limited-memory rank-one pairs; the memory is dropped (restart) when the
    update denominator degenerates.
    """
    bnorm = float(np.linalg.norm(b))
    scale = bnorm if bnorm > 0 else 1.0
    x = np.array(x0, dtype=np.float64, copy=True)
    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []

    def H_apply(vec):
        out = vec.copy()
        for u, v in zip(us, vs):
            out += u * float(v @ vec)
        return out

    def HT_apply(vec):
        out = vec.copy()
        for u, v in zip(us, vs):
            out += v * float(u @ vec)
        return out

    fx = apply_fn(x) - b
    _check_finite(fx, 0, "broyden")
    rel = float(np.linalg.norm(fx)) / scale
    it = 0
    converged = rel <= tol
    while it < max_iterations and not converged:
        s = -H_apply(fx)
        x_new = x + s
        fx_new = apply_fn(x_new) - b
        it += 1
        _check_finite(fx_new, it, "broyden")
        ydiff = fx_new - fx
        Hy = H_apply(ydiff)
        denom = float(s @ Hy)
        if abs(denom) <= 1e-14 * max(float(np.linalg.norm(s)) * float(np.linalg.norm(Hy)), 1e-300):
            us.clear()
            vs.clear()  # restart the Jacobian estimate
        else:
            us.append((s - Hy) / denom)
            vs.append(HT_apply(s))
        x, fx = x_new, fx_new
        rel = float(np.linalg.norm(fx)) / scale
        if on_iteration is not None:
            on_iteration(it, x, rel)
        converged = rel <= tol
    r = b - apply_fn(x)
    rel = float(np.linalg.norm(r)) / scale
    return x, {"converged": rel <= tol, "iterations": it,
               "final_relative_residual": rel}


# -- orchestration over SystemOperator ----------------------------------------


def _resolve_initial(config: SolverConfig, b: np.ndarray) -> np.ndarray:
    if config.initial_guess == "rhs":
        return b.copy()
    return np.zeros_like(b)


def solve(op: SystemOperator, rhs: Image, config: SolverConfig,
          reference: Image | None = None,
          record_objective: bool = True) -> tuple[Image, SolveReport]:
    """Run the configured solver on op z = rhs and return (W z as x, report).

    The solution image returned is the raw z iterate wrapped as an Image;
    callers apply W themselves (the pipeline does). PSNR telemetry, when a
    reference is given, is measured on W z.
    """
    if config.method == "cg" and not op.symmetric:
        raise ConfigurationError("cg requires the symmetric A-form operator")

    b = rhs.vector().astype(np.float64, copy=True)
    x0 = _resolve_initial(config, b)
    report = SolveReport(method=config.method)
    ops_start = op.op_count
    t_start = time.perf_counter()
    telemetry_time = 0.0

    def on_iteration(k: int, z: np.ndarray, rel: float):
        nonlocal telemetry_time
        t0 = time.perf_counter()
        objective = math.nan
        quality = math.nan
        with op.counting_paused():
            if record_objective:
                objective = objective_theta(op.forward, op.denoiser, op.rho,
                                            _solve_y, z)
            if reference is not None:
                xz = op.denoiser.apply_vec(z)
                quality = psnr(reference, Image(xz.reshape(op.shape)))
        telemetry_time += time.perf_counter() - t0
        report.records.append(IterationRecord(
            iteration=k,
            residual=rel,
            objective=objective,
            psnr=quality,
            seconds=time.perf_counter() - t_start - telemetry_time,
            op_applications=op.op_count - ops_start,
        ))

    # theta telemetry needs the raw measurement attached to the operator
    _solve_y = op.measurement
    if _solve_y is None:
        record_objective = False
        _solve_y = np.zeros(op.forward.m)

    kwargs = dict(tol=config.relative_residual_tolerance,
                  max_iterations=config.max_iterations,
                  on_iteration=on_iteration)
    if config.method == "gmres-restarted":
        z, info = gmres(op.apply_vec, b, x0, restart=config.restart_length,
                        augment=0, **kwargs)
    elif config.method == "gmres-augmented":
        z, info = gmres(op.apply_vec, b, x0, restart=config.restart_length,
                        augment=config.augment_count, **kwargs)
    elif config.method == "broyden":
        z, info = broyden(op.apply_vec, b, x0, **kwargs)
    else:
        z, info = cg(op.apply_vec, b, x0, **kwargs)

    report.iterations = info["iterations"]
    report.converged = info["converged"]
    report.final_relative_residual = info["final_relative_residual"]
    report.operator_applications = op.op_count - ops_start
    report.wall_seconds = time.perf_counter() - t_start - telemetry_time
    return Image(z.reshape(op.shape)), report


def solver_shootout(op: SystemOperator, y: np.ndarray, methods,
                    base_config: SolverConfig,
                    reference: Image | None = None) -> list[tuple[str, SolveReport]]:
    """Run several solvers on the identical problem and initial guess."""
    methods = list(methods)
    if not methods:
        raise ConfigurationError("solver shootout needs at least one method")
    op.measurement = np.asarray(y, dtype=np.float64).reshape(-1)
    rhs = op.rhs(np.asarray(y, dtype=np.float64).reshape(op.forward.output_shape))
    results = []
    for method in methods:
        cfg = replace(base_config, method=method)
        op.forward.counter.reset()
        op.denoiser.counter.reset()
        _, report = solve(op, rhs, cfg, reference=reference)
        results.append((method, report))
    return results
