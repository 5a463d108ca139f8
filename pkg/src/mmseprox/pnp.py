"""Plug-and-play proximal gradient solver with convergence diagnostics.

One iteration is x_{k+1} = apply(x_k - grad(x_k)) with the denoiser as the
proximal step (implicit step size 1), which requires the fidelity gradient
to be L-Lipschitz with L < 1.  Alongside the iterates the solver records,
per step k:

  objective_F   value of the composite objective at x_k
                (fidelity + summed envelope-route regularizer)
  residual      ||(x_k - x_{k+1}) + grad(x_{k+1}) - grad(x_k)||, an upper
                bound on the distance from 0 to the composite objective's
                subdifferential at x_{k+1}
  best_residual running minimum of residual
  descent_slack F(x_k) - F(x_{k+1}) - (1-L)/2 * step_norm^2, which the
                descent inequality keeps nonnegative up to rounding
  step_norm     ||x_k - x_{k+1}||

``rate_certificate`` checks the nonasymptotic bound: for every k, the best
residual seen through step k is at most C sqrt(F(x_1) - F*) / sqrt(k) with
C = (1 + L) / sqrt((1 - L)/2) and F* the smallest recorded objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .denoiser import Denoiser
from .operators import Fidelity
from .regularizer import Regularizer
from .textio import fmt17, write_text

__all__ = [
    "Init",
    "SolverConfig",
    "IterRecord",
    "SolverTrace",
    "RateCertificate",
    "DivergenceError",
    "run",
    "stationarity_residual",
    "descent_check",
    "rate_certificate",
    "psnr",
    "write_trace_csv",
]


class Init(str, Enum):
    ZEROS = "zeros"
    OBSERVATION = "observation"
    ADJOINT_OBSERVATION = "adjoint_observation"


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 50
    init: Init = Init.ZEROS
    record_objective: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters!r}")


@dataclass(frozen=True)
class IterRecord:
    k: int
    objective_F: float
    residual: float
    best_residual: float
    descent_slack: float
    step_norm: float


@dataclass
class SolverTrace:
    records: list[IterRecord]
    iterates: list[np.ndarray] = field(repr=False)
    final_x: np.ndarray = field(repr=False)
    final_objective: float
    lipschitz: float


@dataclass(frozen=True)
class RateCertificate:
    C: float
    F1: float
    Fstar_estimate: float
    violations: tuple[int, ...]


class DivergenceError(RuntimeError):
    """An iterate went non-finite; carries the trace accumulated so far."""

    def __init__(self, message: str, trace: SolverTrace):
        super().__init__(message)
        self.trace = trace


def stationarity_residual(fid: Fidelity, x_prev: np.ndarray, x_next: np.ndarray) -> float:
    """Norm of a vector known to lie in the composite subdifferential at x_next."""
    w = (x_prev - x_next) + fid.grad(x_next) - fid.grad(x_prev)
    return float(np.linalg.norm(w))


def _initial_point(fid: Fidelity, init: Init) -> np.ndarray:
    if init == Init.ZEROS:
        return np.zeros(fid.op.input_size)
    if init == Init.OBSERVATION:
        if fid.op.input_size != fid.op.output_size:
            raise ValueError(
                "observation init needs a square operator; use adjoint_observation"
            )
        return fid.y.copy()
    if init == Init.ADJOINT_OBSERVATION:
        return fid.op.adjoint(fid.y)
    raise ValueError(f"unknown init {init!r}")


def run(
    denoiser: Denoiser,
    fid: Fidelity,
    reg: Regularizer,
    cfg: SolverConfig,
    x0=None,
) -> SolverTrace:
    """Iterate the scheme for cfg.max_iters steps and assemble the trace.

    ``x0`` overrides cfg.init with an explicit starting point.
    """
    L = fid.lipschitz()
    if not L < 1.0:
        raise ValueError(
            f"fidelity Lipschitz constant is {L!r}; the scheme requires L < 1 "
            "(rescale the fidelity, e.g. Fidelity.auto)"
        )

    def objective(x: np.ndarray) -> float:
        return fid.value(x) + reg.phi_total(x)

    if x0 is not None:
        x = np.asarray(x0, dtype=float).reshape(-1).copy()
        if x.size != fid.op.input_size:
            raise ValueError(f"x0 has {x.size} entries, operator expects {fid.op.input_size}")
    else:
        x = _initial_point(fid, cfg.init)
    iterates = [x.copy()]
    objectives = [objective(x)] if cfg.record_objective else None
    residuals: list[float] = []
    step_norms: list[float] = []

    def partial_trace() -> SolverTrace:
        return _assemble(iterates, objectives, residuals, step_norms, L)

    g = fid.grad(x)
    for _ in range(cfg.max_iters):
        x_next = denoiser.apply(x - g)
        if not np.isfinite(x_next).all():
            raise DivergenceError(
                f"iterate {len(iterates)} is non-finite", partial_trace()
            )
        g_next = fid.grad(x_next)
        residuals.append(float(np.linalg.norm((x - x_next) + g_next - g)))
        step_norms.append(float(np.linalg.norm(x - x_next)))
        if cfg.record_objective:
            objectives.append(objective(x_next))
        x, g = x_next, g_next
        iterates.append(x.copy())

    return _assemble(iterates, objectives, residuals, step_norms, L)


def _assemble(iterates, objectives, residuals, step_norms, L: float) -> SolverTrace:
    records = []
    best = math.inf
    for i, (res, step) in enumerate(zip(residuals, step_norms)):
        best = min(best, res)
        if objectives is not None:
            f_here = objectives[i]
            slack = objectives[i] - objectives[i + 1] - 0.5 * (1.0 - L) * step**2
        else:
            f_here = math.nan
            slack = math.nan
        records.append(
            IterRecord(
                k=i + 1,
                objective_F=f_here,
                residual=res,
                best_residual=best,
                descent_slack=slack,
                step_norm=step,
            )
        )
    final_objective = objectives[-1] if objectives is not None else math.nan
    return SolverTrace(
        records=records,
        iterates=iterates,
        final_x=iterates[-1],
        final_objective=float(final_objective),
        lipschitz=float(L),
    )


def descent_check(trace: SolverTrace) -> list[float]:
    """Per-step descent slacks; raises if objectives were not recorded."""
    if any(math.isnan(r.descent_slack) for r in trace.records):
        raise ValueError("objectives were not recorded; rerun with record_objective=True")
    return [r.descent_slack for r in trace.records]


def rate_certificate(trace: SolverTrace, fid: Fidelity | None = None, tol: float = 1e-9) -> RateCertificate:
    """Check the k^{-1/2} residual bound along a recorded trace."""
    K = len(trace.records)
    if K < 10:
        raise ValueError(f"trace has only {K} records; need at least 10")
    if any(math.isnan(r.objective_F) for r in trace.records) or math.isnan(trace.final_objective):
        raise ValueError("objectives were not recorded; rerun with record_objective=True")
    L = fid.lipschitz() if fid is not None else trace.lipschitz
    C = (1.0 + L) / math.sqrt((1.0 - L) / 2.0)
    F1 = trace.records[0].objective_F
    Fstar = min(min(r.objective_F for r in trace.records), trace.final_objective)
    gap = math.sqrt(max(F1 - Fstar, 0.0))
    violations = []
    for k in range(1, K):
        bound = C * gap / math.sqrt(k) + tol
        if trace.records[k - 1].best_residual > bound:
            violations.append(k)
    return RateCertificate(C=C, F1=F1, Fstar_estimate=Fstar, violations=tuple(violations))


def psnr(x, truth, peak: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB against a known clean signal."""
    x = np.asarray(x, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if x.shape != truth.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {truth.shape}")
    peak = float(truth.max()) if peak is None else float(peak)
    mse = float(np.mean((x - truth) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def write_trace_csv(trace: SolverTrace, destination, truth=None) -> None:
    """Emit the trace; the psnr column is nan unless a clean signal is given.

    The psnr at row k is measured on the iterate the step started from.
    """
    lines = ["k,F,residual,best_residual,descent_slack,step_norm,psnr"]
    for rec in trace.records:
        if truth is not None:
            p = psnr(trace.iterates[rec.k - 1], truth)
        else:
            p = math.nan
        lines.append(
            ",".join(
                (
                    str(rec.k),
                    fmt17(rec.objective_F),
                    fmt17(rec.residual),
                    fmt17(rec.best_residual),
                    fmt17(rec.descent_slack),
                    fmt17(rec.step_norm),
                    fmt17(p),
                )
            )
        )
    write_text(destination, "\n".join(lines) + "\n")
