"""Discrete-time dynamic optimization problems and the stirred-tank instance.

The problem class is a horizon of explicit polynomial step maps plus a
stagewise cost over the states.  The bundled instance is a continuously
stirred tank reactor: track the outlet temperature to a 340 K setpoint by
manipulating the coolant temperature, with the temperature-dependent
reaction-rate factor frozen at the setpoint so every right-hand side stays
polynomial.  `simulate` runs the exact forward recursion and is the
ground-truth oracle for every energy identity downstream.
"""

from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError, NonExplicitDynamicsError
from .polyalg import Namespace, Polynomial, VarId, input_var, state_var

STATE_NAMES = ("c", "T")  # reactor instance: concentration, temperature
INPUT_NAMES = ("Tc",)  # coolant temperature


@dataclass(frozen=True)
class ReactorParams:
    """Physical parameters of the stirred-tank reactor.

    Defaults are the case-study values; `T_fix` is both the tracking setpoint
    and the temperature at which the Arrhenius factor is frozen.
    """

    F0: float = 0.1  # feed flow rate, m^3/min
    T0_feed: float = 350.0  # feed temperature, K
    c0_feed: float = 1.0  # feed concentration, kmol/m^3
    k0: float = 7.2e10  # pre-exponential rate factor, 1/min
    r: float = 0.219  # reactor radius, m
    E_over_R: float = 8750.0  # activation temperature, K
    U: float = 54.94  # heat transfer coefficient, kJ/(min m^2 K)
    rho: float = 1000.0  # density, kg/m^3
    Cp: float = 0.239  # heat capacity, kJ/(kg K)
    dH: float = -5e-4  # reaction enthalpy, kJ/kmol
    h: float = 0.8  # reactor fill height, m
    T_fix: float = 340.0  # setpoint / rate-freeze temperature, K

    def __post_init__(self):
        for name in ("F0", "k0", "r", "E_over_R", "U", "rho", "Cp", "h"):
            if getattr(self, name) <= 0:
                raise ValueError(f"ReactorParams.{name} must be strictly positive")

    def rate_constant(self) -> float:
        """Reaction rate with the exponential frozen at T_fix, 1/min."""
        return self.k0 * math.exp(-self.E_over_R / self.T_fix)


@dataclass(frozen=True)
class PolynomialODE:
    """Explicit ODE right-hand sides, one polynomial per state component.

    Polynomials are written in stage-0 state/input variables.
    """

    state_dim: int
    input_dim: int
    rhs: tuple[Polynomial, ...]

    def __post_init__(self):
        if len(self.rhs) != self.state_dim:
            raise ValueError("rhs length must equal state_dim")
        for p in self.rhs:
            for v in p.variables():
                if v.stage != 0 or v.namespace not in (Namespace.STATE, Namespace.INPUT):
                    raise ValueError(f"rhs references non-stage-0 variable {v}")


@dataclass(frozen=True)
class DynamicOptProblem:
    """Horizon of explicit step polynomials plus a stagewise cost.

    `dynamics[t][s]` gives state `s` at stage t+1 as a polynomial in stage-t
    variables.  `stage_cost` is a template in stage-0 variables, summed over
    stages 0..N.  Optional `equality_penalties` are residual polynomials in
    absolute-stage variables, each contributing weight * residual**2.
    """

    horizon_N: int
    dt: float
    dynamics: tuple[tuple[Polynomial, ...], ...]
    initial_state: tuple[float, ...]
    input_lower: tuple[float, ...]
    input_upper: tuple[float, ...]
    stage_cost: Polynomial
    equality_penalties: tuple[tuple[Polynomial, float], ...] = ()
    label: str = "custom"

    def __post_init__(self):
        if self.horizon_N < 1:
            raise ValueError("horizon_N must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.dynamics) != self.horizon_N:
            raise ValueError("dynamics must provide one stage map per step")
        if len(self.input_lower) != len(self.input_upper):
            raise ValueError("input bound vectors must have equal length")
        if not all(lo < hi for lo, hi in zip(self.input_lower, self.input_upper)):
            raise ValueError("input_lower must be strictly below input_upper")

    @property
    def state_dim(self) -> int:
        return len(self.initial_state)

    @property
    def input_dim(self) -> int:
        return len(self.input_lower)


@dataclass
class Trajectory:
    """States/inputs over the horizon plus the realized objective."""

    states: np.ndarray  # (N+1, state_dim)
    inputs: np.ndarray  # (N+1, input_dim); final row NaN when not supplied
    objective_value: float


def euler_discretize(ode: PolynomialODE, dt: float, N: int) -> tuple[tuple[Polynomial, ...], ...]:
    """Explicit-Euler step maps: x_{t+1} = x_t + dt * rhs(x_t, u_t).

    Returns one tuple of step polynomials per stage, written in that stage's
    variables.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if N < 1:
        raise ValueError("N must be >= 1")
    base = tuple(
        Polynomial.variable(state_var(0, s)) + dt * ode.rhs[s]
        for s in range(ode.state_dim)
    )
    return tuple(tuple(p.shift_stage(t) for p in base) for t in range(N))


def cstr_ode(params: ReactorParams, variant: str = "appendix_b") -> PolynomialODE:
    """Reactor right-hand sides with the rate factor constant-folded.

    `variant` selects which discrete-time form the temperature equation
    follows: "appendix_b" divides the flow term by pi r^2 and uses cooling
    coefficient 2U/(r rho Cp); "appendix_a" keeps the fill height h in both
    (flow divided by pi r^2 h, cooling scaled by h).
    """
    if variant not in ("appendix_b", "appendix_a"):
        raise ValueError(f"unknown reactor variant {variant!r}")
    p = params
    k = p.rate_constant()
    area = math.pi * p.r**2
    c = Polynomial.variable(state_var(0, 0))
    T = Polynomial.variable(state_var(0, 1))
    Tc = Polynomial.variable(input_var(0, 0))

    dc = (p.F0 / (area * p.h)) * (Polynomial.constant(p.c0_feed) - c) - k * c
    if variant == "appendix_b":
        flow_gain = p.F0 / area
        cool_gain = 2.0 * p.U / (p.r * p.rho * p.Cp)
    else:
        flow_gain = p.F0 / (area * p.h)
        cool_gain = 2.0 * p.U * p.h / (p.r * p.rho * p.Cp)
    dT = (
        flow_gain * (Polynomial.constant(p.T0_feed) - T)
        - (p.dH / (p.rho * p.Cp)) * k * c
        + cool_gain * (Tc - T)
    )
    return PolynomialODE(state_dim=2, input_dim=1, rhs=(dc, dT))


def cstr_problem(
    params: ReactorParams | None = None,
    N: int = 20,
    dt: float = 0.2,
    initial_state: tuple[float, float] = (877.0, 324.5),
    input_bounds: tuple[float, float] = (295.0, 330.0),
    variant: str = "appendix_b",
) -> DynamicOptProblem:
    """The reactor tracking instance: minimize sum_i (T_i - T_fix)^2.

    Defaults reproduce the case study exactly: 4-minute horizon in N=20 steps
    of dt=0.2 min, initial (c, T) = (877, 324.5), coolant bounds [295, 330].
    """
    params = params or ReactorParams()
    ode = cstr_ode(params, variant=variant)
    dynamics = euler_discretize(ode, dt, N)
    T0 = Polynomial.variable(state_var(0, 1))
    stage_cost = (T0 - params.T_fix) ** 2
    return DynamicOptProblem(
        horizon_N=N,
        dt=dt,
        dynamics=dynamics,
        initial_state=tuple(float(v) for v in initial_state),
        input_lower=(float(input_bounds[0]),),
        input_upper=(float(input_bounds[1]),),
        stage_cost=stage_cost,
        label=f"cstr-N{N}",
    )


def _validate_stage_polynomial(p: Polynomial, stage: int):
    for v in p.variables():
        if v.namespace not in (Namespace.STATE, Namespace.INPUT) or v.stage != stage:
            raise NonExplicitDynamicsError(
                f"stage-{stage} dynamics reference {v}; explicit form requires "
                f"stage-{stage} state/input variables only"
            )


def simulate(problem: DynamicOptProblem, inputs, horizon: int | None = None) -> Trajectory:
    """Run the exact forward recursion and score the objective.

    `inputs` must provide at least N rows (stages 0..N-1); values outside the
    box bounds produce a warning, not an error, so infeasible solver outputs
    can still be scored.  `horizon` truncates the recursion to the first N'
    steps (N'=0 scores the initial state only).
    """
    N = problem.horizon_N if horizon is None else horizon
    if N < 0 or N > problem.horizon_N:
        raise ValueError(f"horizon override must be in [0, {problem.horizon_N}]")
    u = np.asarray(inputs, dtype=float)
    if u.size == 0:
        u = np.zeros((0, problem.input_dim))
    elif u.ndim == 1:
        u = u.reshape(-1, 1) if problem.input_dim == 1 else np.atleast_2d(u)
    if u.shape[0] < N:
        raise LengthMismatchError(f"need at least {N} input rows, got {u.shape[0]}")
    if u.shape[1] != problem.input_dim:
        raise LengthMismatchError(
            f"input rows have {u.shape[1]} components, expected {problem.input_dim}"
        )
    lo, hi = np.asarray(problem.input_lower), np.asarray(problem.input_upper)
    used = u[: N + 1] if u.shape[0] > N else u[:N]
    if np.any(used < lo - 1e-12) or np.any(used > hi + 1e-12):
        warnings.warn("input sequence violates box bounds; scoring anyway", stacklevel=2)

    states = np.empty((N + 1, problem.state_dim))
    states[0] = problem.initial_state
    full_assignment: dict[VarId, float] = {}
    for t in range(N):
        assignment = {state_var(t, s): states[t, s] for s in range(problem.state_dim)}
        assignment.update({input_var(t, j): u[t, j] for j in range(problem.input_dim)})
        full_assignment.update(assignment)
        for s in range(problem.state_dim):
            _validate_stage_polynomial(problem.dynamics[t][s], t)
            states[t + 1, s] = problem.dynamics[t][s].evaluate(assignment)
    full_assignment.update(
        {state_var(N, s): states[N, s] for s in range(problem.state_dim)}
    )
    if u.shape[0] > N:
        full_assignment.update(
            {input_var(N, j): u[N, j] for j in range(problem.input_dim)}
        )

    objective = 0.0
    for i in range(N + 1):
        objective += problem.stage_cost.shift_stage(i).evaluate(full_assignment)
    for residual, weight in problem.equality_penalties:
        objective += weight * residual.evaluate(full_assignment) ** 2

    traj_inputs = np.full((N + 1, problem.input_dim), np.nan)
    traj_inputs[: min(u.shape[0], N + 1)] = u[: N + 1]
    return Trajectory(states=states, inputs=traj_inputs, objective_value=objective)


def closed_form_concentration(problem_params: ReactorParams, dt: float, i: int, c0: float) -> float:
    """Closed form of the affine concentration recursion: c_i = a^i c0 + b (1-a^i)/(1-a)."""
    p = problem_params
    flow = p.F0 / (math.pi * p.r**2 * p.h)
    a = 1.0 - dt * (flow + p.rate_constant())
    b = dt * flow * p.c0_feed
    if a == 1.0:
        return c0 + i * b
    return a**i * c0 + b * (1.0 - a**i) / (1.0 - a)


# -- problem-definition files -------------------------------------------------

_PRESETS = {"cstr": cstr_problem}

#: Default bit width used when a problem file omits [binarization].
DEFAULT_BITS_PER_INPUT = 10


@dataclass
class ProblemSpec:
    """A loaded problem plus the binarization width requested alongside it."""

    problem: DynamicOptProblem
    bits_per_input: int = DEFAULT_BITS_PER_INPUT
    params: ReactorParams = field(default_factory=ReactorParams)


def load_preset(name: str) -> ProblemSpec:
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(_PRESETS)}")
    return ProblemSpec(problem=_PRESETS[name]())


def load_problem_file(path: str) -> ProblemSpec:
    """Read a key-value problem definition with nested sections.

    Sections: [problem] (preset, horizon, dt, variant), [parameters]
    (reactor overrides), [initial_state] (c, T), [bounds] (Tc = lo, hi),
    [binarization] (bits_per_input).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(f"problem file not found: {path}")

    sec = cp["problem"] if cp.has_section("problem") else {}
    preset = sec.get("preset", "cstr")
    if preset not in _PRESETS:
        raise ValueError(f"problem file {path}: unknown preset {preset!r}")
    N = int(sec.get("horizon", 20))
    dt = float(sec.get("dt", 0.2))
    variant = sec.get("variant", "appendix_b")

    overrides = {}
    if cp.has_section("parameters"):
        for key, value in cp["parameters"].items():
            canonical = {f.lower(): f for f in ReactorParams.__dataclass_fields__}
            if key.lower() not in canonical:
                raise ValueError(f"problem file {path}: unknown parameter {key!r}")
            overrides[canonical[key.lower()]] = float(value)
    params = ReactorParams(**overrides)

    initial = (877.0, 324.5)
    if cp.has_section("initial_state"):
        initial = (
            float(cp["initial_state"].get("c", initial[0])),
            float(cp["initial_state"].get("T", initial[1])),
        )

    bounds = (295.0, 330.0)
    if cp.has_section("bounds"):
        raw = cp["bounds"].get("Tc", None)
        if raw is not None:
            lo, hi = (float(x) for x in raw.split(","))
            bounds = (lo, hi)

    bits = DEFAULT_BITS_PER_INPUT
    if cp.has_section("binarization"):
        bits = int(cp["binarization"].get("bits_per_input", bits))

    problem = cstr_problem(
        params=params, N=N, dt=dt, initial_state=initial,
        input_bounds=bounds, variant=variant,
    )
    return ProblemSpec(problem=problem, bits_per_input=bits, params=params)
