"""Greedy stepwise structure search over ADMGs.

Neighbors of a graph are all graphs reachable by adding or removing a
single edge (directed or bidirected) while staying acyclic.  Each step
fits every neighbor, warm starting the shared parameters from the
incumbent fit, and moves to the neighbor with the lowest criterion; the
search stops when no neighbor improves it.  Criterion values within an
absolute tolerance are treated as tied and broken deterministically, so
a search is reproducible run to run.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fitting import FitError, FitOptions, FitResult, fit, initialize
from .graph import Admg, GraphError
from .inference import information_criteria
from .moebius import parametrization

__all__ = ["Step", "SearchResult", "neighbors", "stepwise"]

# two criterion values within this are a tie
TIE_TOL = 1e-6

CRITERIA = ("bic", "aic")


@dataclass(frozen=True)
class Step:
    """One accepted move with the criterion after taking it."""

    action: str  # "add" or "remove"
    kind: str  # "->" or "<->"
    a: object
    b: object
    criterion: float

    def describe(self) -> str:
        return f"{self.action} {self.a} {self.kind} {self.b}"


@dataclass(frozen=True)
class SearchResult:
    graph: Admg
    fit: FitResult
    criterion: str
    value: float
    start_value: float
    steps: tuple[Step, ...]
    evaluated: int


def neighbors(g: Admg) -> list[tuple[str, str, object, object, Admg]]:
    """All single-edge moves in deterministic order: removals before
    additions, directed before bidirected, edges in canonical order.
    Directed additions that would create a cycle are omitted."""
    out = []
    for a, b in g.directed_edges:
        out.append(("remove", "->", a, b, g.without_edge(a, b, "->")))
    for a, b in g.bidirected_edges:
        out.append(("remove", "<->", a, b, g.without_edge(a, b, "<->")))
    vs = g.vertices
    directed = set(g.directed_edges)
    bidirected = set(g.bidirected_edges)
    for i, a in enumerate(vs):
        for j, b in enumerate(vs):
            if i == j:
                continue
            if (a, b) in directed or (b, a) in directed:
                continue
            try:
                out.append(("add", "->", a, b, g.with_edge(a, b, "->")))
            except GraphError:
                pass
    for i, a in enumerate(vs):
        for b in vs[i + 1 :]:
            if (a, b) not in bidirected:
                out.append(("add", "<->", a, b, g.with_edge(a, b, "<->")))
    return out


def _criterion(res: FitResult, which: str) -> float:
    bic, aic = information_criteria(res)
    return bic if which == "bic" else aic


def _warm_start(g_new: Admg, counts, incumbent: FitResult) -> np.ndarray:
    """Copy parameters shared with the incumbent graph, fill the rest
    from the independence start."""
    q0 = initialize(g_new, counts)
    old = parametrization(incumbent.graph).table
    old_ix = {
        (p.head, p.tail, p.tail_state): j for j, p in enumerate(old.params)
    }
    new = parametrization(g_new).table
    for j, p in enumerate(new.params):
        k = old_ix.get((p.head, p.tail, p.tail_state))
        if k is not None:
            q0[j] = incumbent.q[k]
    return q0


def _tie_key(g: Admg):
    # Ties are almost always likelihood-equivalent orientations of one
    # new edge.  Committing to a directed orientation imposes extra
    # conditional independences that later single-edge moves cannot
    # undo, so prefer the variant with fewer directed edges (the
    # bidirected one), then break remaining ties lexicographically.
    return (
        len(g.directed_edges),
        tuple(g.directed_edges),
        tuple(g.bidirected_edges),
    )


def _graph_key(g: Admg):
    return (g.vertices, g._dir, g._bi)


def stepwise(
    counts,
    start: Admg,
    criterion: str = "bic",
    opts: FitOptions | None = None,
    max_steps: int = 200,
) -> SearchResult:
    """Greedy single-edge search minimizing BIC or AIC.

    Every candidate fit of a step is independent, so they run on worker
    threads when ``opts.jobs`` allows.  Fits are cached by graph, and
    the criterion of the accepted sequence is strictly decreasing.

    When ``opts`` is not given, fits use a tighter tolerance than the
    plain fitting default: tie detection compares criteria at 1e-6, so
    equivalent candidates must be converged well past that.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}")
    if opts is None:
        opts = FitOptions(tol=1e-10)
    counts = np.asarray(counts, dtype=float)

    cache: dict = {}
    evaluated = 0

    def run_fit(g: Admg, warm_from: FitResult | None):
        q0 = _warm_start(g, counts, warm_from) if warm_from is not None else None
        try:
            return fit(g, counts, opts, start=q0)
        except FitError as exc:
            warnings.warn(f"skipping candidate that failed to fit: {exc}")
            return None

    current_fit = run_fit(start, None)
    if current_fit is None:
        raise FitError("the starting graph cannot be fitted")
    cache[_graph_key(start)] = current_fit
    evaluated = 1
    current = start
    value = _criterion(current_fit, criterion)
    start_value = value
    steps: list[Step] = []

    for _ in range(max_steps):
        moves = neighbors(current)
        jobs = opts.jobs or 1
        fresh = [m for m in moves if _graph_key(m[4]) not in cache]
        warm = current_fit
        if jobs > 1 and len(fresh) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                fits = list(ex.map(lambda m: run_fit(m[4], warm), fresh))
        else:
            fits = [run_fit(m[4], warm) for m in fresh]
        for m, res in zip(fresh, fits):
            cache[_graph_key(m[4])] = res
            evaluated += 1
        scored = [
            (_criterion(res, criterion), m, res)
            for m in moves
            if (res := cache[_graph_key(m[4])]) is not None
        ]
        if not scored:
            break
        best_val = min(s[0] for s in scored)
        if best_val >= value - TIE_TOL:
            break
        tied = [s for s in scored if s[0] <= best_val + TIE_TOL]
        tied.sort(key=lambda s: _tie_key(s[1][4]))
        chosen_val, move, res = tied[0]
        action, kind, a, b, g_new = move
        steps.append(Step(action, kind, a, b, chosen_val))
        current, current_fit, value = g_new, res, chosen_val

    return SearchResult(
        graph=current,
        fit=current_fit,
        criterion=criterion,
        value=value,
        start_value=start_value,
        steps=tuple(steps),
        evaluated=evaluated,
    )
