"""Iteration history: completed trajectories with minimum-time cost-to-go,
plus weighted K-nearest queries used to build terminal candidate sets.

Cost-to-go is stored in integer time steps: h(states[t]) = T - t, where
T is the first step whose state lies within epsilon of the target. States
recorded after completion (e.g. a braking tail that settles the vehicle)
keep cost-to-go 0: they are terminal candidates from which the task is
already done. Queries only see the most recent `window` recorded
iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import state_distance, wrap_angle


class HistoryError(Exception):
    """Raised on misuse of the history store (caller bugs, not runtime noise)."""


@dataclass(frozen=True)
class TrajectoryRecord:
    """One completed iteration: states (T+1, 4), inputs (T, 2), cost_to_go (T+1,)."""

    iteration_index: int
    states: np.ndarray
    inputs: np.ndarray
    cost_to_go: np.ndarray


@dataclass(frozen=True)
class DistanceWeights:
    """Diagonal weights for the squared state distance used by k_nearest."""

    d0: np.ndarray

    def __post_init__(self):
        d0 = np.asarray(self.d0, dtype=float)
        object.__setattr__(self, "d0", d0)
        if d0.shape != (4,) or np.any(d0 < 0) or not np.any(d0 > 0):
            raise ValueError("distance weights must be 4 nonnegative values, at least one positive")


@dataclass(frozen=True)
class TerminalCandidate:
    """A stored state proposed as an iLQR terminal target."""

    state: np.ndarray
    cost_to_go: int
    source: tuple[int, int]  # (iteration_index, time_index)


@dataclass(frozen=True)
class HistorySet:
    """Recorded iterations plus the recency window visible to queries."""

    records: tuple = ()
    window: int = 2

    def visible(self) -> tuple:
        return self.records[-self.window:] if self.window > 0 else ()

    def visible_state_count(self) -> int:
        return sum(rec.states.shape[0] for rec in self.visible())


def record_iteration(h: HistorySet, states, inputs, target, epsilon: float) -> HistorySet:
    """Append a completed trajectory; rejects ones that never reach the target.

    The runner only records completed iterations, so a rejection here
    signals a caller bug rather than an expected runtime condition.
    """
    states = np.asarray(states, dtype=float).reshape(-1, 4)
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 2)
    if states.shape[0] != inputs.shape[0] + 1:
        raise HistoryError(f"length mismatch: {states.shape[0]} states vs {inputs.shape[0]} inputs")
    errs = state_distance(states, np.asarray(target, dtype=float))
    hits = np.flatnonzero(errs < epsilon)
    if hits.size == 0:
        raise HistoryError(f"trajectory never comes within epsilon={epsilon} of the target "
                           f"(closest: {float(errs.min()):.3f}); refusing to record")
    T = int(hits[0])
    rec = TrajectoryRecord(
        iteration_index=len(h.records),
        states=states,
        inputs=inputs,
        cost_to_go=np.maximum(T - np.arange(states.shape[0]), 0),
    )
    return HistorySet(records=h.records + (rec,), window=h.window)


def k_nearest(h: HistorySet, guide, k: int, w: DistanceWeights,
              exclude: frozenset | set | None = None) -> list[TerminalCandidate]:
    """The k visible stored states closest to `guide` in the weighted metric.

    Distinctness is by source index (iteration, time), not by coordinates,
    so repeated visits to the same point keep their individual cost-to-go.
    Ties break toward the more recent iteration, then the later time index.

    `exclude` is an optional set of (iteration, time) sources to skip; with
    exclusions the result may hold fewer than k candidates (possibly none).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    visible = h.visible()
    total = sum(rec.states.shape[0] for rec in visible)
    if total < k:
        raise HistoryError(f"only {total} states visible in history, need k={k} "
                           "(iteration 0 produced too short a trajectory?)")

    guide = np.asarray(guide, dtype=float)

    def _weighted_sq(states):
        diff = states - guide
        diff = np.column_stack([diff[:, :3], wrap_angle(diff[:, 3])])
        return (diff ** 2) @ w.d0

    dists = np.concatenate([_weighted_sq(rec.states) for rec in visible])
    its = np.concatenate([np.full(rec.states.shape[0], rec.iteration_index) for rec in visible])
    ts = np.concatenate([np.arange(rec.states.shape[0]) for rec in visible])
    # lexsort: last key is primary
    order = np.lexsort((-ts, -its, dists))
    if exclude:
        order = [idx for idx in order if (int(its[idx]), int(ts[idx])) not in exclude]
    order = order[:k]

    by_iter = {rec.iteration_index: rec for rec in visible}
    out = []
    for idx in order:
        rec = by_iter[int(its[idx])]
        t = int(ts[idx])
        out.append(TerminalCandidate(state=rec.states[t].copy(),
                                     cost_to_go=int(rec.cost_to_go[t]),
                                     source=(rec.iteration_index, t)))
    return out


def stratified_k_nearest(h: HistorySet, guide, k: int, w: DistanceWeights,
                         exclude: frozenset | set | None = None) -> list[TerminalCandidate]:
    """k nearest stored states with the quota split evenly across iterations.

    A slow early iteration stores its states much more densely than a fast
    later one, so a plain nearest query near their shared start can return
    slow-iteration states only. Taking (almost) equal shares per visible
    iteration keeps every recorded trajectory represented among the
    candidates. When k does not divide evenly, more recent iterations get
    the extra slots. Candidates are ordered oldest iteration first, nearest
    first within an iteration; with exclusions the result may be short.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    visible = h.visible()
    if not visible:
        raise HistoryError("no iterations visible in history")
    total = sum(rec.states.shape[0] for rec in visible)
    if total < k:
        raise HistoryError(f"only {total} states visible in history, need k={k} "
                           "(iteration 0 produced too short a trajectory?)")
    n = len(visible)
    base, extra = divmod(k, n)
    out = []
    for pos, rec in enumerate(visible):
        share = base + (1 if pos >= n - extra else 0)
        if share == 0:
            continue
        sub = HistorySet(records=(rec,), window=1)
        share = min(share, rec.states.shape[0])
        out.extend(k_nearest(sub, guide, share, w, exclude=exclude))
    return out
