"""Block-diagonal observer gain design making (I - K D_C)(W ⊗ A) Schur stable.

Two routes:

* ``ccl``: cone-complementarity linearization.  Schur stability of Â is
  equivalent to feasibility of [[X, Âᵀ], [Â, X⁻¹]] ≻ 0.  Replacing X⁻¹ by
  a free Y with [[X, I], [I, Y]] ⪰ 0 gives an LMI in (X, Y, K) since Â is
  affine in K; the coupling Y = X⁻¹ is pushed by minimizing the linearized
  trace(X_k Y + X Y_k).
* ``spectral_descent``: derivative-free coordinate search on ρ(Â(K)).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .matrices import ObserverGain, as_matrix, kronecker, spectral_radius

log = logging.getLogger(__name__)

METHODS = ("ccl", "spectral_descent")


@dataclass(frozen=True)
class SynthesisConfig:
    method: str = "ccl"
    block_diagonal: bool = True
    block_dim: int | None = None  # defaults to A's dimension
    margin: float = 1e-3
    max_iter: int = 50
    tol: float = 1e-6
    eps: float = 1e-6  # strictness of the LMIs
    solver: str = "SCS"
    fallback: bool = True
    descent_step: float = 0.25
    descent_min_step: float = 1e-4
    descent_max_sweeps: int = 200

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown synthesis method {self.method!r}; choose from {METHODS}")


@dataclass
class SynthesisResult:
    gain: ObserverGain
    achieved_spectral_radius: float
    method: str
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


def _ahat(q, dc, k):
    return q - k @ dc @ q


def _effective_columns(dc: np.ndarray, n: int, b: int) -> list[np.ndarray]:
    """Per block, the columns of K_i that can influence Â (nonzero rows of D_C)."""
    cols = []
    for i in range(n):
        blk = dc[i * b:(i + 1) * b, :]
        cols.append(np.flatnonzero(np.any(blk != 0, axis=1)))
    return cols


def synthesize_gain(w, a, dc, cfg: SynthesisConfig | None = None) -> SynthesisResult:
    cfg = cfg or SynthesisConfig()
    if not cfg.block_diagonal:
        raise ValueError("only block-diagonal gains are supported (one block per CAV)")
    w, a, dc = as_matrix(w, "W"), as_matrix(a, "A"), as_matrix(dc, "D_C")
    q = kronecker(w, a)
    b = cfg.block_dim or a.shape[0]
    if q.shape[0] % b or b != a.shape[0]:
        raise ValueError(f"block size {b} does not tile a {q.shape[0]}-dim gain per CAV")
    if dc.shape != q.shape:
        raise ValueError(f"D_C is {dc.shape}, expected {q.shape}")
    n = w.shape[0]

    result = None
    if cfg.method == "ccl":
        try:
            result = _ccl(q, dc, n, b, cfg)
        except Exception as exc:  # solver failures fall through to descent
            log.warning("CCL inner solve failed: %s", exc)
        if result is not None and (result.converged or not cfg.fallback):
            return result
        log.info("CCL did not certify stability; running spectral descent")
    descent = _spectral_descent(q, dc, n, b, cfg)
    if result is not None and result.achieved_spectral_radius < descent.achieved_spectral_radius and not descent.converged:
        return result
    return descent


def _ccl(q, dc, n, b, cfg: SynthesisConfig) -> SynthesisResult:
    import cvxpy as cp

    d = q.shape[0]
    ident = np.eye(d)
    cols = _effective_columns(dc, n, b)
    x_var = cp.Variable((d, d), symmetric=True)
    y_var = cp.Variable((d, d), symmetric=True)
    k_blocks = [cp.Variable((b, len(c))) if len(c) else None for c in cols]
    x_lin = cp.Parameter((d, d), symmetric=True)
    y_lin = cp.Parameter((d, d), symmetric=True)

    # X, Y ≻ 0 follow from the two block LMIs.
    # K D_C Q only sees the columns in `cols`, so K_i is parameterized on them.
    rows = []
    for i, (kb, c) in enumerate(zip(k_blocks, cols)):
        block_rows = slice(i * b, (i + 1) * b)
        base = dc[block_rows, :][c, :] @ q if len(c) else None
        rows.append(q[block_rows, :] - (kb @ base if kb is not None else 0))
    ahat = cp.vstack(rows)
    lmi_stab = cp.bmat([[x_var, ahat.T], [ahat, y_var]])
    lmi_cpl = cp.bmat([[x_var, ident], [ident, y_var]])
    constraints = [
        (lmi_stab + lmi_stab.T) / 2 >> cfg.eps * np.eye(2 * d),
        (lmi_cpl + lmi_cpl.T) / 2 >> 0,
    ]
    problem = cp.Problem(cp.Minimize(cp.trace(x_lin @ y_var + x_var @ y_lin)), constraints)

    x_lin.value, y_lin.value = ident, ident
    best_k, best_rho = np.zeros_like(q), np.inf
    history = []
    it = 0
    for it in range(1, cfg.max_iter + 1):
        problem.solve(solver=cfg.solver)
        if x_var.value is None:
            raise RuntimeError(f"inner SDP status {problem.status}")
        k = np.zeros_like(q)
        for i, (kb, c) in enumerate(zip(k_blocks, cols)):
            if kb is not None:
                k[i * b:(i + 1) * b, i * b + c] = kb.value
        rho = spectral_radius(_ahat(q, dc, k))
        history.append(rho)
        if rho < best_rho:
            best_k, best_rho = k, rho
        gap = problem.value - 2 * d
        log.debug("ccl iter %d: rho=%.6f gap=%.3g", it, rho, gap)
        if rho < 1 - cfg.margin or gap < cfg.tol:
            break
        xv, yv = x_var.value, y_var.value
        x_lin.value, y_lin.value = (xv + xv.T) / 2, (yv + yv.T) / 2
    gain = ObserverGain.from_matrix(best_k, b)
    return SynthesisResult(gain, best_rho, "ccl", it, best_rho < 1 - cfg.margin, history)


def _spectral_descent(q, dc, n, b, cfg: SynthesisConfig) -> SynthesisResult:
    """Coordinate search with a shrinking step.

    K = 0 sits on a defective eigenvalue at 1 where small moves cannot lower
    ρ, so the search starts from the best K_i = γ·pinv(D_C block i) on a
    fixed γ grid (γ = 0 included).
    """
    pinv = np.zeros_like(q)
    for i in range(n):
        s_ = slice(i * b, (i + 1) * b)
        pinv[s_, s_] = np.linalg.pinv(dc[s_, s_])
    k, rho = np.zeros_like(q), np.inf
    for gamma in np.linspace(0.0, 1.0, 21):
        trial = spectral_radius(_ahat(q, dc, gamma * pinv))
        if trial < rho - 1e-12:
            k, rho = gamma * pinv, trial
    k = k.copy()
    coords = [(i * b + r, i * b + c) for i, cs in enumerate(_effective_columns(dc, n, b))
              for r in range(b) for c in cs]
    step = cfg.descent_step
    history = [rho]
    sweeps = 0
    while step >= cfg.descent_min_step and sweeps < cfg.descent_max_sweeps:
        sweeps += 1
        improved = False
        for idx in coords:
            for sign in (1.0, -1.0):
                k[idx] += sign * step
                trial = spectral_radius(_ahat(q, dc, k))
                if trial < rho - 1e-12:
                    rho = trial
                    improved = True
                    break
                k[idx] -= sign * step
        history.append(rho)
        if not improved:
            step /= 2
    gain = ObserverGain.from_matrix(k, b)
    return SynthesisResult(gain, rho, "spectral_descent", sweeps, rho < 1 - cfg.margin, history)
