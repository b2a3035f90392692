"""Dense, desk-scale ground truth for the kernel regularizer.

Everything here works on materialized matrices: the symmetric similar
form S = D^{-1/2} K D^{-1/2} is eigendecomposed, W is rebuilt as
M Lambda M^{-1} with M = D^{-1/2} Q, and the generalized inverse
W^dagger = M Lambda^dagger M^{-1} feeds the regularizer

    Phi_W(x) = 1/2 x^T D (I - W) W^dagger x   on range(W),  +inf elsewhere.

The scaled proximal operator of Phi_W (prox in the D-weighted norm) is
computed by an independent route: restrict to range(W) via the eigenbasis
and solve the reduced diagonal normal equations in closed form. Agreement
of that minimizer with W x is the executable form of the W-is-a-scaled-prox
theorem.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PropertyViolation, SizeCapExceeded

__all__ = ["DenseSpectralForm", "spectral_decompose", "verify_appendix",
           "PropertyCheck", "VerificationReport"]

log = logging.getLogger(__name__)

DENSE_CAP = 4096
RANK_TOLERANCE = 1e-9     # relative to the largest eigenvalue
RANGE_TOLERANCE = 1e-7    # relative distance from range(W) treated as membership
CLIP_GUARD = 1e-8         # max tolerated pre-clip spectrum violation


@dataclass
class DenseSpectralForm:
    """Eigendecomposition bundle of a materialized kernel denoiser."""

    W: np.ndarray            # dense denoiser, n x n
    d: np.ndarray            # diagonal of D, length n
    Q: np.ndarray            # orthonormal eigenvectors of S, columns sorted
    lam: np.ndarray          # eigenvalues clipped to [0, 1], descending, tail zeroed
    rank: int                # count of eigenvalues above the rank cutoff
    preclip_min: float
    preclip_max: float
    rank_tolerance: float = RANK_TOLERANCE
    range_tolerance: float = RANGE_TOLERANCE
    M: np.ndarray = field(init=False)      # D^{-1/2} Q
    Minv: np.ndarray = field(init=False)   # Q^T D^{1/2}
    W_dagger: np.ndarray = field(init=False)

    def __post_init__(self):
        sqrt_d = np.sqrt(self.d)
        self.M = self.Q / sqrt_d[:, None]
        self.Minv = self.Q.T * sqrt_d[None, :]
        lam_dag = np.zeros_like(self.lam)
        lam_dag[: self.rank] = 1.0 / self.lam[: self.rank]
        self.W_dagger = (self.M * lam_dag[None, :]) @ self.Minv

    @property
    def n(self) -> int:
        return self.d.size

    # -- range geometry ------------------------------------------------------

    def range_distance(self, x: np.ndarray) -> float:
        """Norm of the component of x outside range(W) (oblique split via M)."""
        coords = self.Minv @ x
        tail = coords[self.rank :]
        if tail.size == 0:
            return 0.0
        return float(np.linalg.norm(self.M[:, self.rank :] @ tail))

    def in_range(self, x: np.ndarray) -> bool:
        scale = max(float(np.linalg.norm(x)), 1e-300)
        return self.range_distance(x) <= self.range_tolerance * scale

    def project_to_range(self, x: np.ndarray) -> np.ndarray:
        coords = self.Minv @ x
        return self.M[:, : self.rank] @ coords[: self.rank]

    # -- the regularizer and its scaled prox ----------------------------------

    def phi(self, x: np.ndarray) -> float:
        """Kernel regularizer value; +inf outside range(W)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if not self.in_range(x):
            return math.inf
        u = self.W_dagger @ x
        return 0.5 * float(x @ (self.d * (u - self.W @ u)))

    def phi_eigen_form(self, x: np.ndarray) -> float:
        """Alternative expression 1/2 x^T U^dag^T (Lambda_r^{-1} - I) U^dag x."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if not self.in_range(x):
            return math.inf
        c = self.Minv[: self.rank] @ x
        sigma = 1.0 / self.lam[: self.rank] - 1.0
        return 0.5 * float(c @ (sigma * c))

    def scaled_prox(self, x: np.ndarray) -> np.ndarray:
        """Minimizer of 1/2 ||z - x||_D^2 + Phi_W(z).

        Brute-force route: parameterize z = U c over range(W); the reduced
        normal equations are diagonal (Lambda_r^{-1} c = U^T D x), giving
        the unique minimizer in closed form without touching W itself.
        """
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        U = self.M[:, : self.rank]
        rhs = U.T @ (self.d * x)
        c = self.lam[: self.rank] * rhs
        return U @ c

    def prox_objective(self, x: np.ndarray, z: np.ndarray) -> float:
        """1/2 ||z - x||_D^2 + Phi_W(z), for minimality spot checks."""
        diff = z - x
        return 0.5 * float(diff @ (self.d * diff)) + self.phi(z)


def spectral_decompose(W_dense: np.ndarray, d: np.ndarray,
                       rank_tolerance: float = RANK_TOLERANCE,
                       clip_guard: float = CLIP_GUARD) -> DenseSpectralForm:
    """Eigendecompose S = D^{1/2} W D^{-1/2} and clip its spectrum to [0, 1].

    Raises PropertyViolation if the pre-clip spectrum leaves
    [-clip_guard, 1 + clip_guard]: that signals a kernel whose windowed
    weights are not positive semidefinite, where the regularizer theory
    does not apply.
    """
    W_dense = np.asarray(W_dense, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    n = d.size
    if W_dense.shape != (n, n):
        raise SizeCapExceeded(f"W shape {W_dense.shape} does not match D length {n}")
    if n > DENSE_CAP:
        raise SizeCapExceeded(f"{n} pixels exceeds dense cap {DENSE_CAP}")
    if np.any(d <= 0):
        raise PropertyViolation("D must be positive definite")

    sqrt_d = np.sqrt(d)
    S = (W_dense * sqrt_d[:, None]) / sqrt_d[None, :]
    S = 0.5 * (S + S.T)
    evals, evecs = np.linalg.eigh(S)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]

    preclip_min = float(evals.min())
    preclip_max = float(evals.max())
    if preclip_min < -clip_guard or preclip_max > 1.0 + clip_guard:
        raise PropertyViolation(
            f"spectrum of S outside [0, 1] beyond the {clip_guard:g} guard: "
            f"[{preclip_min:.3e}, {preclip_max:.3e}]"
        )
    if preclip_min < 0 or preclip_max > 1.0:
        log.debug("clipping S spectrum from [%.3e, %.3e] to [0, 1]",
                  preclip_min, preclip_max)
    lam = np.clip(evals, 0.0, 1.0)

    lam_max = lam[0] if lam.size else 0.0
    rank = int(np.count_nonzero(lam > rank_tolerance * lam_max))
    lam[rank:] = 0.0

    form = DenseSpectralForm(
        W=W_dense, d=d, Q=evecs, lam=lam, rank=rank,
        preclip_min=preclip_min, preclip_max=preclip_max,
        rank_tolerance=rank_tolerance,
    )

    ortho_err = np.max(np.abs(evecs.T @ evecs - np.eye(n)))
    if ortho_err > 1e-10:
        raise PropertyViolation(f"eigenvector basis lost orthonormality: {ortho_err:.3e}")
    recon = (form.M * lam[None, :]) @ form.Minv
    recon_err = np.max(np.abs(recon - W_dense))
    if recon_err > 1e-8:
        raise PropertyViolation(f"M Lambda M^-1 reconstruction error {recon_err:.3e}")
    return form


# -- appendix property suite --------------------------------------------------


@dataclass
class PropertyCheck:
    name: str
    trials: int
    max_violation: float
    tolerance: float
    counterexample: str | None = None

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    def render(self) -> str:
        status = "pass" if self.passed else "FAIL"
        line = (f"property={self.name} trials={self.trials} "
                f"max_violation={self.max_violation:.3e} status={status}")
        if self.counterexample:
            line += f"\ncounterexample={self.counterexample}"
        return line


@dataclass
class VerificationReport:
    checks: list[PropertyCheck]
    seed: int
    n: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render_text(self) -> str:
        lines = [c.render() for c in self.checks]
        lines.append(
            f"overall={'pass' if self.passed else 'FAIL'} "
            f"tolerance={self.tolerance:.1e} seed={self.seed} n={self.n}"
        )
        return "\n".join(lines) + "\n"


def _random_psd(rng, n: int, rank: int) -> np.ndarray:
    if rank == 0:
        return np.zeros((n, n))
    G = rng.standard_normal((n, rank))
    return G @ G.T


def _null_range_bases(mat: np.ndarray, rel_tol: float = 1e-10):
    evals, evecs = np.linalg.eigh(mat)
    scale = max(float(evals.max(initial=0.0)), 0.0)
    cut = rel_tol * max(scale, 1.0)
    null = evecs[:, evals <= cut]
    rng_basis = evecs[:, evals > cut]
    return null, rng_basis


def _check_prop6(rng, trials: int, n: int) -> tuple[float, str | None]:
    """N(A+B) subset of N(A) and N(B); R(A) and R(B) subsets of R(A+B)."""
    worst = 0.0
    where = None
    for t in range(trials):
        A = _random_psd(rng, n, int(rng.integers(0, n + 1)))
        B = _random_psd(rng, n, int(rng.integers(0, n + 1)))
        null_ab, range_ab = _null_range_bases(A + B)
        scale = max(np.abs(A).max(), np.abs(B).max(), 1.0)
        v = 0.0
        if null_ab.size:
            v = max(v,
                    np.abs(A @ null_ab).max() / scale,
                    np.abs(B @ null_ab).max() / scale)
        proj = range_ab @ range_ab.T
        for mat in (A, B):
            _, rb = _null_range_bases(mat)
            if rb.size:
                v = max(v, np.abs(rb - proj @ rb).max())
        if v > worst:
            worst, where = v, f"prop6 trial={t} violation={v:.3e}"
    return worst, (where if worst > 0 else None)


def _check_prop5(rng, trials: int, n: int) -> tuple[float, str | None]:
    """U1 subset of U2 implies complement(U2) subset of complement(U1)."""
    worst = 0.0
    where = None
    for t in range(trials):
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        k1 = int(rng.integers(0, n + 1))
        k2 = int(rng.integers(k1, n + 1))
        V1 = Q[:, k1:]
        V2 = Q[:, k2:]
        if k2 < n:  # rotate inside the complement so bases differ
            R, _ = np.linalg.qr(rng.standard_normal((n - k2, n - k2)))
            V2 = V2 @ R
        if V2.size == 0:
            continue
        resid = V2 - V1 @ (V1.T @ V2) if V1.size else V2
        v = float(np.abs(resid).max())
        if v > worst:
            worst, where = v, f"prop5 trial={t} k1={k1} k2={k2} violation={v:.3e}"
    return worst, (where if worst > 0 else None)


def _check_thm3(rng, trials: int, n: int) -> tuple[float, str | None]:
    """First-order condition characterizes the subspace-restricted minimum."""
    worst = 0.0
    where = None
    for t in range(trials):
        H = _random_psd(rng, n, int(rng.integers(1, n + 1)))
        target = rng.standard_normal(n)
        g = H @ target  # keeps the restricted problem bounded below
        k = int(rng.integers(1, n + 1))
        B = rng.standard_normal((n, k))

        def q(x):
            return 0.5 * float(x @ (H @ x)) - float(g @ x)

        Hr = B.T @ H @ B
        gr = B.T @ g
        c_star = np.linalg.pinv(Hr, rcond=1e-12) @ gr
        x_star = B @ c_star
        scale = max(abs(q(x_star)), 1.0)

        # minimizer satisfies the first-order condition
        v = float(np.linalg.norm(B.T @ (H @ x_star - g))) / max(np.linalg.norm(B, 2) ** 2, 1.0)
        # and beats every probed point of the subspace
        for _ in range(5):
            x_other = x_star + B @ rng.standard_normal(k)
            v = max(v, max(0.0, (q(x_star) - q(x_other)) / scale))
        # a point violating the condition admits strict descent in the subspace
        x_bad = x_star + B @ rng.standard_normal(k)
        grad_proj = B.T @ (H @ x_bad - g)
        if np.linalg.norm(grad_proj) > 1e-6:
            p = B @ grad_proj
            curv = float(p @ (H @ p))
            step = float(grad_proj @ grad_proj) / curv if curv > 0 else 1.0
            descent = q(x_bad - step * p) - q(x_bad)
            v = max(v, max(0.0, descent / scale))
        if v > worst:
            worst, where = v, f"thm3 trial={t} violation={v:.3e}"
    return worst, (where if worst > 0 else None)


def verify_appendix(trials: int = 200, n: int = 16, seed: int = 0,
                    tolerance: float = 1e-8) -> VerificationReport:
    """Randomized executable checks of the appendix propositions."""
    if n > 64:
        raise SizeCapExceeded(f"appendix suite capped at n=64, got {n}")
    checks = []
    for name, fn in (
        ("psd_sum_null_and_range", _check_prop6),
        ("orthogonal_complement_reversal", _check_prop5),
        ("subspace_first_order_condition", _check_thm3),
    ):
        rng = np.random.default_rng(seed)
        worst, where = fn(rng, trials, n) if trials > 0 else (0.0, None)
        checks.append(PropertyCheck(
            name=name, trials=trials, max_violation=worst,
            tolerance=tolerance,
            counterexample=where if worst > tolerance else None,
        ))
    return VerificationReport(checks=checks, seed=seed, n=n, tolerance=tolerance)
