"""Particle swarm search over the 4-dimensional optimizer-constant box.

Personal and global bests accept only evaluations the feasibility classifier
approves, so the swarm is steered away from parameter regions that yield
degenerate structures.  Every evaluation is archived (parameters, objective,
verdict) for later analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .mma import MmaParams, ParameterBox


class PsoError(RuntimeError):
    pass


class NoFeasibleRegionError(PsoError):
    """Every bootstrap swarm came back fully infeasible."""


@dataclass
class PsoConfig:
    n_particles: int = 10
    iterations: int = 100
    stagnation: int = 20
    alpha0: float = 0.9
    alpha_decay: float = 0.99
    beta1: float = 1.0
    beta2: float = 2.0
    velocity_clamp: float = 0.5  # fraction of the box width per dimension
    bootstrap_retries: int = 10


@dataclass
class Particle:
    x: np.ndarray
    v: np.ndarray
    pbest_x: np.ndarray | None = None
    pbest_c: float = math.inf
    pbest_feasible: bool = False


@dataclass
class EvalOutcome:
    compliance: float
    feasible: bool
    converged: bool


@dataclass
class ArchiveRow:
    iteration: int
    particle: int
    params: np.ndarray
    compliance: float
    feasible: bool
    converged: bool


@dataclass
class SwarmState:
    particles: list[Particle]
    gbest_x: np.ndarray | None = None
    gbest_c: float = math.inf
    alpha: float = 0.9
    iteration: int = 0
    archive: list[ArchiveRow] = field(default_factory=list)


@dataclass
class TuneResult:
    best: MmaParams
    best_compliance: float
    trace: list[float]  # global-best objective per iteration (index 0 = bootstrap)
    archive: list[ArchiveRow]
    iterations: int


def step_velocity_position(p: Particle, gbest_x: np.ndarray, alpha: float,
                           rng, box: ParameterBox, cfg: PsoConfig) -> Particle:
    """One velocity/position update.

    A particle without a feasible personal best is pulled toward the global
    best on both terms.  The velocity is clamped to a box-width fraction,
    positions clamp to the box and clamped dimensions lose their velocity.
    """
    lo, hi = box.lo(), box.hi()
    width = hi - lo
    pbest = p.pbest_x if p.pbest_x is not None else gbest_x
    r1 = rng.uniform(0.0, cfg.beta1, size=p.x.size)
    r2 = rng.uniform(0.0, cfg.beta2, size=p.x.size)
    v = alpha * p.v + r1 * (pbest - p.x) + r2 * (gbest_x - p.x)
    vmax = cfg.velocity_clamp * width
    v = np.clip(v, -vmax, vmax)
    x = p.x + v
    clamped_lo = x < lo
    clamped_hi = x > hi
    x = np.clip(x, lo, hi)
    v = np.where(clamped_lo | clamped_hi, 0.0, v)
    return replace(p, x=x, v=v)


def evaluate(position: np.ndarray, run_fn: Callable, classify_fn: Callable) -> tuple[EvalOutcome, object]:
    """Run the inner optimizer at ``position`` and gate it by the classifier.

    Feasible means the run produced a solvable structure (finite objective)
    and the classifier accepts its image.  A runner failure maps to an
    infinite objective and an infeasible verdict.
    """
    try:
        record = run_fn(position)
    except Exception:
        return EvalOutcome(math.inf, False, False), None
    solvable = record is not None and math.isfinite(record.compliance)
    feasible = bool(solvable and classify_fn(record))
    c = record.compliance if solvable else math.inf
    converged = bool(record.converged) if record is not None else False
    return EvalOutcome(c, feasible, converged), record


def update_bests(state: SwarmState, idx: int, x: np.ndarray, out: EvalOutcome) -> None:
    """Strictly-improving, feasibility-gated best updates."""
    if not out.feasible:
        return
    p = state.particles[idx]
    if out.compliance < p.pbest_c:
        p.pbest_x = x.copy()
        p.pbest_c = out.compliance
        p.pbest_feasible = True
    if out.compliance < state.gbest_c:
        state.gbest_x = x.copy()
        state.gbest_c = out.compliance


def tune(box: ParameterBox, evaluate_fn: Callable[[np.ndarray], EvalOutcome],
         cfg: PsoConfig, seed: int = 0) -> TuneResult:
    """Full search: bootstrap until one feasible evaluation exists, then swarm.

    The bootstrap redraws the whole swarm from fresh uniform positions up to
    ``bootstrap_retries`` times; iterations end at the budget or after
    ``stagnation`` iterations without a global-best change.
    """
    rng = np.random.default_rng(seed)
    lo, hi = box.lo(), box.hi()
    state = SwarmState(particles=[], alpha=cfg.alpha0)

    for attempt in range(cfg.bootstrap_retries):
        positions = rng.uniform(lo, hi, size=(cfg.n_particles, lo.size))
        state.particles = [Particle(x=positions[i].copy(), v=np.zeros(lo.size))
                           for i in range(cfg.n_particles)]
        outcomes = []
        for i, p in enumerate(state.particles):
            out = evaluate_fn(p.x)
            state.archive.append(ArchiveRow(0, i, p.x.copy(), out.compliance, out.feasible, out.converged))
            outcomes.append(out)
        for i, out in enumerate(outcomes):
            update_bests(state, i, state.particles[i].x, out)
        if state.gbest_x is not None:
            break
    else:
        raise NoFeasibleRegionError(
            f"no feasible region found in {cfg.bootstrap_retries} bootstrap swarms")

    trace = [state.gbest_c]
    stagnant = 0
    iterations_run = 0
    for t in range(1, cfg.iterations + 1):
        state.iteration = t
        gbest_before = state.gbest_c
        moved = []
        outcomes = []
        for i, p in enumerate(state.particles):
            p2 = step_velocity_position(p, state.gbest_x, state.alpha, rng, box, cfg)
            state.particles[i] = p2
            moved.append(p2.x)
            out = evaluate_fn(p2.x)
            state.archive.append(ArchiveRow(t, i, p2.x.copy(), out.compliance, out.feasible, out.converged))
            outcomes.append(out)
        for i, out in enumerate(outcomes):
            update_bests(state, i, moved[i], out)
        trace.append(state.gbest_c)
        state.alpha *= cfg.alpha_decay
        iterations_run = t
        stagnant = stagnant + 1 if state.gbest_c == gbest_before else 0
        if stagnant >= cfg.stagnation:
            break

    return TuneResult(
        best=MmaParams.from_array(state.gbest_x),
        best_compliance=state.gbest_c,
        trace=trace,
        archive=state.archive,
        iterations=iterations_run,
    )


def archive_to_csv(archive: list[ArchiveRow]) -> str:
    lines = ["iteration,particle,albefa,asyinit,asyincr,asydecr,compliance,feasible,converged"]
    for row in archive:
        params = ",".join(repr(v) for v in row.params.tolist())
        lines.append(f"{row.iteration},{row.particle},{params},{row.compliance!r},"
                     f"{int(row.feasible)},{int(row.converged)}")
    return "\n".join(lines) + "\n"


def trace_to_csv(trace: list[float]) -> str:
    lines = ["iteration,gbest_compliance"]
    for i, c in enumerate(trace):
        lines.append(f"{i},{c!r}")
    return "\n".join(lines) + "\n"
