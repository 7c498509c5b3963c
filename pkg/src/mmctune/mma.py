"""Moving-asymptote sequential convex optimizer, single inequality constraint.

The four knobs the tuning loop searches over are exactly the ones exposed
here: ``albefa`` (move-limit fraction), ``asyinit`` (initial asymptote
spread), ``asyincr``/``asydecr`` (asymptote widening/shrinking factors).
The separable rational subproblem is solved through its one-dimensional dual
by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

RAA0 = 1e-5
DUAL_G_TOL = 1e-9
DUAL_BRACKET_TOL = 1e-12
LAMBDA_MAX = 1e12

PARAM_NAMES = ("albefa", "asyinit", "asyincr", "asydecr")


class MmaError(ValueError):
    pass


@dataclass(frozen=True)
class MmaParams:
    """The four tunable optimizer constants."""

    albefa: float = 0.5
    asyinit: float = 0.5
    asyincr: float = 1.2
    asydecr: float = 0.7

    def validate(self) -> None:
        if not 0.0 < self.albefa < 1.0:
            raise MmaError(f"albefa must lie in (0, 1), got {self.albefa}")
        if not self.asyinit > 0.0:
            raise MmaError(f"asyinit must be positive, got {self.asyinit}")
        if not self.asyincr > 1.0:
            raise MmaError(f"asyincr must exceed 1, got {self.asyincr}")
        if not 0.0 < self.asydecr < 1.0:
            raise MmaError(f"asydecr must lie in (0, 1), got {self.asydecr}")

    def as_array(self) -> np.ndarray:
        return np.array([self.albefa, self.asyinit, self.asyincr, self.asydecr])

    @classmethod
    def from_array(cls, arr) -> "MmaParams":
        a = np.asarray(arr, dtype=float).ravel()
        if a.size != 4:
            raise MmaError(f"expected 4 parameters, got {a.size}")
        return cls(*a.tolist())


@dataclass(frozen=True)
class ParameterBox:
    """Search box for the four optimizer constants (albefa, asyinit, asyincr, asydecr)."""

    lower: tuple[float, float, float, float] = (0.25, 0.25, 1.00, 0.25)
    upper: tuple[float, float, float, float] = (0.75, 0.75, 1.50, 0.75)

    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    def contains(self, params) -> bool:
        a = params.as_array() if isinstance(params, MmaParams) else np.asarray(params, dtype=float)
        return bool(np.all(a >= self.lo()) and np.all(a <= self.hi()))

    def clip(self, arr) -> np.ndarray:
        return np.clip(np.asarray(arr, dtype=float), self.lo(), self.hi())

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo(), self.hi())


DEFAULT_BOX = ParameterBox()


@dataclass
class MmaState:
    """History one optimization run carries between steps."""

    xmin: np.ndarray
    xmax: np.ndarray
    k: int = 0  # completed iterations
    xold1: np.ndarray | None = None
    xold2: np.ndarray | None = None
    low: np.ndarray | None = None
    upp: np.ndarray | None = None

    @classmethod
    def fresh(cls, xmin, xmax) -> "MmaState":
        xmin = np.asarray(xmin, dtype=float)
        xmax = np.asarray(xmax, dtype=float)
        if not np.all(xmin < xmax):
            raise MmaError("need xmin < xmax componentwise")
        return cls(xmin=xmin, xmax=xmax)


def update_asymptotes(state: MmaState, x: np.ndarray, params: MmaParams) -> tuple[np.ndarray, np.ndarray]:
    """Asymptotes for the iteration ``state.k`` belongs to (1-based current).

    First two iterations spread by ``asyinit``; later ones widen or shrink
    the previous gap depending on whether the variable moved monotonically.
    """
    x = np.asarray(x, dtype=float)
    rng = state.xmax - state.xmin
    if state.k <= 2 or state.xold1 is None or state.xold2 is None:
        low = x - params.asyinit * rng
        upp = x + params.asyinit * rng
        return low, upp
    s = (x - state.xold1) * (state.xold1 - state.xold2)
    gamma = np.ones_like(x)
    gamma[s > 0] = params.asyincr
    gamma[s < 0] = params.asydecr
    low = x - gamma * (state.xold1 - state.low)
    upp = x + gamma * (state.upp - state.xold1)
    low = np.minimum(low, x - 0.01 * rng)
    low = np.maximum(low, x - 10.0 * rng)
    upp = np.maximum(upp, x + 0.01 * rng)
    upp = np.minimum(upp, x + 10.0 * rng)
    return low, upp


def move_limits(x, low, upp, xmin, xmax, albefa: float) -> tuple[np.ndarray, np.ndarray]:
    """Box for the subproblem: pull the asymptote interval in by ``albefa``."""
    x = np.asarray(x, dtype=float)
    alfa = np.maximum(xmin, low + albefa * (x - low))
    beta = np.minimum(xmax, upp - albefa * (upp - x))
    return alfa, beta


@dataclass
class Subproblem:
    """Separable rational approximation around ``x`` with one constraint."""

    x: np.ndarray
    low: np.ndarray
    upp: np.ndarray
    alfa: np.ndarray
    beta: np.ndarray
    p0: np.ndarray
    q0: np.ndarray
    p1: np.ndarray
    q1: np.ndarray
    b: float

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sum(self.p0 / (self.upp - x) + self.q0 / (x - self.low)))

    def constraint(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sum(self.p1 / (self.upp - x) + self.q1 / (x - self.low)) - self.b)


def build_subproblem(x, df0, fval, dfdx, low, upp, alfa, beta, xmin, xmax) -> Subproblem:
    """Canonical rational coefficients with the small convexifying offsets."""
    x = np.asarray(x, dtype=float)
    df0 = np.asarray(df0, dtype=float)
    dfdx = np.asarray(dfdx, dtype=float)
    xmami = np.maximum(np.asarray(xmax, dtype=float) - np.asarray(xmin, dtype=float), 1e-5)
    ux1 = upp - x
    xl1 = x - low
    ux2 = ux1 * ux1
    xl2 = xl1 * xl1

    p0j = np.maximum(df0, 0.0)
    q0j = np.maximum(-df0, 0.0)
    pq0 = 0.001 * (p0j + q0j) + RAA0 / xmami
    p0 = (p0j + pq0) * ux2
    q0 = (q0j + pq0) * xl2

    p1j = np.maximum(dfdx, 0.0)
    q1j = np.maximum(-dfdx, 0.0)
    pq1 = 0.001 * (p1j + q1j) + RAA0 / xmami
    p1 = (p1j + pq1) * ux2
    q1 = (q1j + pq1) * xl2

    b = float(np.sum(p1 / ux1 + q1 / xl1) - fval)
    return Subproblem(x=x.copy(), low=np.asarray(low, float).copy(), upp=np.asarray(upp, float).copy(),
                      alfa=np.asarray(alfa, float).copy(), beta=np.asarray(beta, float).copy(),
                      p0=p0, q0=q0, p1=p1, q1=q1, b=b)


def _primal_of_lambda(sub: Subproblem, lam: float) -> np.ndarray:
    sp = np.sqrt(sub.p0 + lam * sub.p1)
    sq = np.sqrt(sub.q0 + lam * sub.q1)
    x = (sp * sub.low + sq * sub.upp) / (sp + sq)
    return np.clip(x, sub.alfa, sub.beta)


def _dual_gap(sub: Subproblem, lam: float) -> float:
    return sub.constraint(_primal_of_lambda(sub, lam))


def solve_subproblem(sub: Subproblem) -> tuple[np.ndarray, float, bool]:
    """Minimize the approximation subject to its constraint and box.

    Returns ``(x_new, lam, strained)``; ``strained`` flags a subproblem whose
    constraint stays violated even as the multiplier saturates.
    """
    if _dual_gap(sub, 0.0) <= 0.0:
        return _primal_of_lambda(sub, 0.0), 0.0, False
    hi = 1.0
    while _dual_gap(sub, hi) > 0.0:
        hi *= 2.0
        if hi > LAMBDA_MAX:
            return _primal_of_lambda(sub, LAMBDA_MAX), LAMBDA_MAX, True
    lo = 0.0
    lam = hi
    while hi - lo > DUAL_BRACKET_TOL:
        mid = 0.5 * (lo + hi)
        g = _dual_gap(sub, mid)
        if abs(g) <= DUAL_G_TOL:
            lam = mid
            break
        if g > 0.0:
            lo = mid
        else:
            hi = mid
        lam = hi  # feasible side of the bracket
    return _primal_of_lambda(sub, lam), lam, False


def kkt_residual(sub: Subproblem, x: np.ndarray, lam: float) -> float:
    """Scaled stationarity + feasibility + complementarity violation."""
    plam = sub.p0 + lam * sub.p1
    qlam = sub.q0 + lam * sub.q1
    grad = plam / (sub.upp - x) ** 2 - qlam / (x - sub.low) ** 2
    scale = plam / (sub.upp - x) ** 2 + qlam / (x - sub.low) ** 2
    at_lower = np.isclose(x, sub.alfa, rtol=0.0, atol=1e-12)
    at_upper = np.isclose(x, sub.beta, rtol=0.0, atol=1e-12)
    stat = np.abs(grad)
    stat[at_lower] = np.maximum(0.0, -grad[at_lower])
    stat[at_upper] = np.maximum(0.0, grad[at_upper])
    stat_resid = float(np.max(stat / np.maximum(scale, 1e-30)))
    g = sub.constraint(x)
    feas = max(0.0, g) / max(1.0, abs(sub.b))
    comp = abs(lam * g) / max(1.0, abs(lam * sub.b))
    return max(stat_resid, feas, comp)


@dataclass
class StepResult:
    x: np.ndarray
    state: MmaState
    strained: bool
    lam: float


def mma_step(x, f0val, df0, fval, dfdx, state: MmaState, params: MmaParams) -> StepResult:
    """One complete outer iteration: asymptotes, move limits, subproblem."""
    params.validate()
    x = np.asarray(x, dtype=float)
    current = replace(state, k=state.k + 1)
    low, upp = update_asymptotes(current, x, params)
    alfa, beta = move_limits(x, low, upp, state.xmin, state.xmax, params.albefa)
    sub = build_subproblem(x, df0, fval, dfdx, low, upp, alfa, beta, state.xmin, state.xmax)
    x_new, lam, strained = solve_subproblem(sub)
    new_state = MmaState(
        xmin=state.xmin,
        xmax=state.xmax,
        k=state.k + 1,
        xold1=x.copy(),
        xold2=None if state.xold1 is None else state.xold1.copy(),
        low=low,
        upp=upp,
    )
    return StepResult(x=x_new, state=new_state, strained=strained, lam=lam)
