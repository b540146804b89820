"""The outer control loop: per time step, repeated optimization cycles that
pick terminal candidates from history via K-nearest queries, solve one
local trajectory optimization per candidate, and keep the best solution.

Cycle r uses a guided state: the current state for r = 1, then the best
open-loop terminal state of the previous cycle. Candidates already
evaluated in earlier cycles of the same decision are excluded from later
nearest-neighbor queries, so the guided state walks outward through the
history instead of re-finding the same cluster (trajectories that start
from rest pile many stored states near the start; without the exclusion
the candidate set repeats immediately and the walk never reaches states
the planner actually has to accelerate toward). Cycling stops when no
unseen candidates remain, when the candidate set (compared as source
indices) repeats the previous cycle's set, or after r_max cycles. The
decision is the first input of the best-scoring solution across all
cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import state_distance, wrap_angle
from .environment import constraint_window, violation
from .history import DistanceWeights, HistorySet, TerminalCandidate, stratified_k_nearest

GOAL_SOURCE = (-1, 0)  # source tag of the synthetic goal candidate
HOLD_SOURCE = (-2, 0)  # source tag of the carried-over previous plan
from .ilqr import ILQRConfig, ILQRProblem, ILQRSolution, solve


@dataclass(frozen=True)
class ControllerConfig:
    k_candidates: int = 6
    r_max: int = 10
    d0: DistanceWeights = field(default_factory=lambda: DistanceWeights(np.array([1.0, 1.0, 0.5, 0.1])))
    d1: np.ndarray = None  # defaults to d0's weights
    w_h: float = 1.0
    w_d: float = 0.2
    ilqr: ILQRConfig = field(default_factory=ILQRConfig)

    def __post_init__(self):
        if self.k_candidates < 1 or self.r_max < 1:
            raise ValueError("k_candidates and r_max must be >= 1")
        if self.w_h < 0 or self.w_d < 0 or self.w_h + self.w_d <= 0:
            raise ValueError("selection weights must be nonnegative with w_h + w_d > 0")
        if self.d1 is None:
            object.__setattr__(self, "d1", np.asarray(self.d0.d0, dtype=float))
        else:
            object.__setattr__(self, "d1", np.asarray(self.d1, dtype=float))


@dataclass(frozen=True)
class CycleDiagnostics:
    """What one optimization cycle did, for the verbose run log."""

    cycle: int
    sources: tuple
    costs_to_go: tuple
    scores: tuple
    best_index: int


@dataclass(frozen=True)
class ControlDecision:
    input: np.ndarray
    predicted_states: np.ndarray
    predicted_inputs: np.ndarray
    cycles_used: int
    diagnostics: tuple


def _catch_up_steps(terminal, cand_state, a_max: float) -> float:
    """Kinematic estimate, in steps, of closing the gap between a plan's
    terminal state and its candidate: planar gap at a representative speed,
    speed gap at full acceleration, heading gap at about a radian per step.
    """
    e = terminal - cand_state
    v_ref = max(1.0, abs(float(terminal[2])), abs(float(cand_state[2])))
    return (float(np.hypot(e[0], e[1])) / v_ref
            + abs(float(e[2])) / a_max
            + abs(float(wrap_angle(e[3]))))


def _candidate_score(sol, cand, config: ControllerConfig, target, epsilon,
                     a_max: float) -> float:
    """Predicted steps to task completion for one candidate plan (scaled by w_h).

    A plan whose predicted states already enter the epsilon-ball around the
    target finishes at the entry index k, regardless of its nominal terminal
    candidate: score w_h*k. Any other plan takes its horizon, plus a
    kinematic catch-up estimate for the terminal miss, plus the candidate's
    recorded cost-to-go: score w_h*(N + catch_up + h(z)). All terms are in
    steps, so a plan that overshoots its candidate but makes real progress
    is not drowned out by a quadratic miss penalty. The weighted quadratic
    miss ||x_N - z||^2_D1 still breaks near-ties (see select_best).
    """
    horizon = sol.states.shape[0] - 1
    if target is not None and epsilon is not None:
        errs = state_distance(sol.states, np.asarray(target, dtype=float))
        hits = np.flatnonzero(errs < epsilon)
        if hits.size:
            return config.w_h * float(hits[0])
    catch_up = _catch_up_steps(sol.states[-1], cand.state, a_max)
    return config.w_h * (horizon + catch_up + cand.cost_to_go)


def select_best(solutions, candidates, config: ControllerConfig,
                target=None, epsilon=None, a_max: float = 2.0) -> int:
    """Index of the candidate plan with the lowest predicted completion score.

    Near-ties break toward the smaller weighted quadratic terminal miss
    w_d*||x_N - z||^2_D1, then smaller cost-to-go, then smaller index.
    """
    if len(solutions) != len(candidates):
        raise ValueError("solutions and candidates must align")
    best_j, best_key = 0, None
    for j, (sol, cand) in enumerate(zip(solutions, candidates)):
        score = _candidate_score(sol, cand, config, target, epsilon, a_max)
        e = sol.states[-1] - cand.state
        miss = config.w_d * float((e * e) @ config.d1)
        key = (score, miss, cand.cost_to_go, j)
        if best_key is None or key < best_key:
            best_j, best_key = j, key
    return best_j


def _selection_scores(solutions, candidates, config, target=None, epsilon=None,
                      a_max: float = 2.0):
    return tuple(_candidate_score(sol, cand, config, target, epsilon, a_max)
                 for sol, cand in zip(solutions, candidates))


def compute_control(x_t, history: HistorySet, obstacles, iteration: int, t: int,
                    config: ControllerConfig, model, executor=None,
                    target=None, epsilon=None, warm_start=None) -> ControlDecision:
    """One full control computation at state x_t.

    `executor` (optional concurrent.futures.Executor) fans out the
    per-candidate solves; results are order-stable, so the decision is
    identical with or without it.

    `target` (optional) is the task goal; when given it joins the first
    cycle's candidates with cost-to-go 0. The goal is an equilibrium, so
    it is always a valid terminal state to finish on — without it, late
    plans can only chase the endpoints of previous iterations, which sit
    wherever those happened to stop and pull each new endpoint a little
    further off the goal.

    `warm_start` (optional, (horizon, nu)) seeds every candidate solve,
    typically the previous step's plan shifted by one. The shifted plan is
    also entered as a candidate in its own right, without re-solving:
    re-solved plans minimize the terminal miss at the horizon end, so a
    fresh solve always "arrives in N steps" no matter how many steps were
    already executed, and the predicted completion never counts down. The
    carried plan's entry into the target ball moves one step closer every
    step by construction, so it wins until a strictly faster plan appears.
    It is dropped if it no longer clears the (possibly moving) obstacles.
    """
    x_t = np.asarray(x_t, dtype=float)
    window = constraint_window(obstacles, iteration, t, config.ilqr.horizon, model.params.dt)

    held = None
    if warm_start is not None and target is not None:
        held_inputs = np.array([model.saturate(u)
                                for u in np.asarray(warm_start, dtype=float)])
        held_states = model.rollout(x_t, held_inputs)
        clear = all(not stage or not np.any(violation(held_states[k + 1], stage) > 0.0)
                    for k, stage in enumerate(window.stages))
        if clear:
            held = (
                ILQRSolution(states=held_states, inputs=held_inputs,
                             final_cost=float("inf"), converged=True,
                             iterations_used=0),
                TerminalCandidate(state=np.asarray(target, dtype=float),
                                  cost_to_go=0, source=HOLD_SOURCE),
            )

    def solve_problems(problems):
        if executor is None:
            return [solve(p) for p in problems]
        return list(executor.map(solve, problems))

    guide = x_t
    prev_sources = None
    seen: set = set()
    best_solution = None
    best_key = None
    diagnostics = []
    cycles_used = 0

    for r in range(1, config.r_max + 1):
        candidates = stratified_k_nearest(history, guide, config.k_candidates,
                                          config.d0, exclude=frozenset(seen))
        problems = [ILQRProblem(x_t, c.state, window, config.ilqr, model,
                                u_init=warm_start) for c in candidates]
        if r == 1 and target is not None:
            goal = TerminalCandidate(state=np.asarray(target, dtype=float),
                                     cost_to_go=0, source=GOAL_SOURCE)
            candidates = candidates + [goal]
            problems.append(ILQRProblem(x_t, goal.state, window, config.ilqr, model,
                                        u_init=warm_start))
            if warm_start is not None:
                # also try the goal from a cold start: the warm-started solve
                # stays in the basin of the committed maneuver, while the
                # cold one can find a direct approach (e.g. brake straight)
                # once the goal comes within the horizon
                candidates = candidates + [goal]
                problems.append(ILQRProblem(x_t, goal.state, window, config.ilqr, model))
        if not candidates:
            break
        sources = frozenset(c.source for c in candidates)
        if sources == prev_sources:
            break
        cycles_used = r
        solutions = solve_problems(problems)
        if r == 1 and held is not None:
            candidates = candidates + [held[1]]
            solutions = solutions + [held[0]]
        a_max = getattr(model, "input_bounds", (2.0,))[0]
        scores = _selection_scores(solutions, candidates, config, target, epsilon, a_max)
        j = select_best(solutions, candidates, config, target, epsilon, a_max)
        key = (scores[j], candidates[j].cost_to_go, r, j)
        if best_key is None or key < best_key:
            best_solution, best_key = solutions[j], key
        diagnostics.append(CycleDiagnostics(
            cycle=r,
            sources=tuple(c.source for c in candidates),
            costs_to_go=tuple(c.cost_to_go for c in candidates),
            scores=scores,
            best_index=j,
        ))
        guide = solutions[j].states[-1]
        prev_sources = sources
        seen.update(sources)

    return ControlDecision(
        input=best_solution.inputs[0].copy(),
        predicted_states=best_solution.states,
        predicted_inputs=best_solution.inputs,
        cycles_used=cycles_used,
        diagnostics=tuple(diagnostics),
    )
