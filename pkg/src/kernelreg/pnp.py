"""Scaled plug-and-play baselines: ISTA, FISTA, and ADMM.

These minimize the same objective as the linear-solver path (the data
term plus rho times the kernel regularizer), using the weighted-norm
updates that make the kernel denoiser an exact scaled proximal step:

    ista:  x+ = W (x - rho^{-1} D^{-1} F^T (F x - y))
    admm:  (F^T F + rho^{-1} D) x+ = F^T y + rho^{-1} D (v - z)
           v+ = W (x+ + z);  z+ = z + x+ - v+

Every iterate of the form W(arg) exposes a surrogate z with x = W z, so
the z-parameterized objective theta(z) is logged per iteration and is
directly comparable with the Krylov solvers' telemetry. A run whose
objective exceeds divergence_factor times its initial value stops with
the diverged flag set (reproducing the small-rho ISTA blowup without
overflowing).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .counting import paused_all
from .denoiser import KernelDenoiser
from .errors import ConfigurationError, NumericalBreakdown
from .forward import ForwardModel
from .image import Image, psnr
from .solvers import IterationRecord, SolveReport, cg
from .system import objective_theta

__all__ = ["PnpConfig", "FistaState", "pnp_ista_step", "pnp_fista_step", "run_pnp"]

ALGORITHMS = ("ista", "fista", "admm")


@dataclass(frozen=True)
class PnpConfig:
    algorithm: str = "ista"
    rho: float = 0.05
    iterations: int = 200
    inner_tolerance: float = 1e-8      # admm x-update cg
    inner_max_iterations: int = 100
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown PnP algorithm '{self.algorithm}'")
        if self.rho <= 0:
            raise ConfigurationError("rho must be positive")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")


def pnp_ista_step(x: np.ndarray, y: np.ndarray, forward: ForwardModel,
                  denoiser: KernelDenoiser, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """One scaled PnP-ISTA update; returns (x_next, pre-denoising point)."""
    d = denoiser.row_sums.reshape(-1)
    grad = forward.adjoint_vec(forward.apply_vec(x) - y)
    z_pre = x - (grad / d) / rho
    return denoiser.apply_vec(z_pre), z_pre


@dataclass
class FistaState:
    x: np.ndarray
    v: np.ndarray
    t: float = 1.0


def pnp_fista_step(state: FistaState, y: np.ndarray, forward: ForwardModel,
                   denoiser: KernelDenoiser, rho: float) -> tuple[FistaState, np.ndarray]:
    """One FISTA update over the scaled ISTA step (standard momentum)."""
    x_new, z_pre = pnp_ista_step(state.v, y, forward, denoiser, rho)
    t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * state.t * state.t))
    beta = (state.t - 1.0) / t_new
    v_new = x_new + beta * (x_new - state.x)
    return FistaState(x=x_new, v=v_new, t=t_new), z_pre


def run_pnp(y: np.ndarray, forward: ForwardModel, denoiser: KernelDenoiser,
            config: PnpConfig, initialization: Image | None = None,
            reference: Image | None = None) -> tuple[Image, SolveReport]:
    """Run the configured PnP algorithm for a fixed iteration budget.

    Returns the final reconstruction (always in range(W) after the first
    iteration) and a SolveReport whose residual column holds the relative
    iterate change (primal residual for admm).
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    shape = denoiser.shape
    n = denoiser.n
    x0 = np.zeros(n) if initialization is None else initialization.vector().copy()
    rho = config.rho

    report = SolveReport(method=f"pnp-{config.algorithm}")
    counters = (forward.counter, denoiser.counter)
    ops_start = forward.counter.total + denoiser.counter.total
    t_start = time.perf_counter()
    telemetry_time = 0.0
    initial_objective = None

    def record(k: int, residual: float, z_surrogate: np.ndarray, x_cur: np.ndarray):
        nonlocal telemetry_time, initial_objective
        t0 = time.perf_counter()
        with paused_all(*counters):
            obj = objective_theta(forward, denoiser, rho, y, z_surrogate)
            quality = psnr(reference, Image(x_cur.reshape(shape))) if reference is not None else math.nan
        telemetry_time += time.perf_counter() - t0
        if initial_objective is None:
            initial_objective = max(obj, 1e-300)
        report.records.append(IterationRecord(
            iteration=k, residual=residual, objective=obj, psnr=quality,
            seconds=time.perf_counter() - t_start - telemetry_time,
            op_applications=forward.counter.total + denoiser.counter.total - ops_start,
        ))
        if not math.isfinite(obj) or obj > config.divergence_factor * initial_objective:
            report.diverged = True
        return obj

    if config.algorithm == "admm":
        x_rec = _run_admm(y, forward, denoiser, config, x0.copy(), record,
                          warm_dual=initialization is not None)
    else:
        fista = config.algorithm == "fista"
        state = FistaState(x=x0.copy(), v=x0.copy())
        for k in range(1, config.iterations + 1):
            x_prev = state.x
            if fista:
                state, z_pre = pnp_fista_step(state, y, forward, denoiser, rho)
            else:
                x_new, z_pre = pnp_ista_step(state.x, y, forward, denoiser, rho)
                state = FistaState(x=x_new, v=x_new)
            if not np.all(np.isfinite(state.x)):
                report.diverged = True
                state = FistaState(x=x_prev, v=x_prev, t=state.t)
                break
            change = np.linalg.norm(state.x - x_prev) / max(np.linalg.norm(x_prev), 1e-30)
            record(k, change, z_pre, state.x)
            if report.diverged:
                break
        x_rec = state.x

    report.iterations = len(report.records)
    report.converged = not report.diverged
    report.final_relative_residual = report.records[-1].residual if report.records else math.nan
    report.operator_applications = forward.counter.total + denoiser.counter.total - ops_start
    report.wall_seconds = time.perf_counter() - t_start - telemetry_time
    return Image(x_rec.reshape(shape)), report


def _run_admm(y, forward, denoiser, config, x0, record, warm_dual=False):
    """ADMM with the rho-consistent weighted-norm x-update, warm-started cg."""
    d = denoiser.row_sums.reshape(-1)
    rho = config.rho
    fty = forward.adjoint_vec(y)

    def inner_apply(v):
        return forward.adjoint_vec(forward.apply_vec(v)) + (d * v) / rho

    v = x0.copy()
    if warm_dual:
        # dual consistent with v being (near) a solution: a true solution
        # then stays an exact fixed point of the outer loop
        dual = rho * (fty - forward.adjoint_vec(forward.apply_vec(v))) / d
    else:
        dual = np.zeros_like(v)
    x = x0.copy()
    for k in range(1, config.iterations + 1):
        rhs = fty + (d * (v - dual)) / rho
        try:
            x, info = cg(inner_apply, rhs, x, tol=config.inner_tolerance,
                         max_iterations=config.inner_max_iterations)
        except NumericalBreakdown as exc:
            raise NumericalBreakdown(f"admm outer iteration {k}: {exc}") from exc
        z_sur = x + dual
        v_new = denoiser.apply_vec(z_sur)
        dual = dual + x - v_new
        primal = np.linalg.norm(x - v_new) / max(np.linalg.norm(v_new), 1e-30)
        v = v_new
        obj = record(k, primal, z_sur, v)
        if not math.isfinite(obj):
            break
    return v
