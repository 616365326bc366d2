"""Constrained connected maximum cut on a :class:`~dualms.graph.SpatialGraph`.

Labels follow the +1/-1 convention: +1 is fluid A (first skeleton), -1 is
fluid B.  A partition is feasible when both sides are nonempty, each side
induces a connected subgraph in which every vertex has degree >= 2, and
pinned vertices carry their fluid's label.
"""
from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator

from ._random import make_rng
from .exceptions import InfeasibleStart, NotFeasible, TooLarge

FLUID_SIGN = {"A": 1, "B": -1}
SIGN_FLUID = {1: "A", -1: "B"}
BRUTE_FORCE_LIMIT = 20


@dataclass(frozen=True, eq=False)
class Partition:
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int8))

    def side(self, sign):
        return np.flatnonzero(self.labels == sign)

    @classmethod
    def from_sides(cls, n, side_a):
        labels = -np.ones(n, dtype=np.int8)
        labels[list(side_a)] = 1
        return cls(labels)


class TraceRecord(NamedTuple):
    iteration: int
    objective: float
    moved_vertex: int


@dataclass
class CutTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    @property
    def n_flips(self):
        return max(len(self.records) - 1, 0)

    def to_csv(self, path, meta=None):
        with open(path, "w", newline="") as fh:
            if meta:
                fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", "objective", "moved_vertex"])
            for r in self.records:
                writer.writerow([r.iteration, repr(float(r.objective)), r.moved_vertex])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [line for line in fh if not line.startswith("#")]
        reader = csv.DictReader(rows)
        return cls([TraceRecord(int(r["iteration"]), float(r["objective"]), int(r["moved_vertex"]))
                    for r in reader])


# ---------------------------------------------------------------- objective


def cut_value(graph, part):
    x = _labels(graph, part)
    u, v = graph.edges.T
    crossing = x[u] != x[v]
    value = float(graph.weights[crossing].sum())
    # total minus intra-side weight must agree with the crossing sum
    intra = float(graph.weights[~crossing].sum())
    assert abs(graph.total_weight - intra - value) <= 1e-9 * max(1.0, graph.total_weight)
    return value


def intra_weight(graph, part):
    x = _labels(graph, part)
    u, v = graph.edges.T
    return float(graph.weights[x[u] == x[v]].sum())


def _labels(graph, part):
    x = part.labels if isinstance(part, Partition) else np.asarray(part)
    if len(x) != graph.n_vertices:
        raise ValueError(f"labels length {len(x)} != |V| = {graph.n_vertices}")
    return x


# ---------------------------------------------------------------- feasibility


class Violation(NamedTuple):
    constraint: str
    vertices: tuple


@dataclass
class FeasibilityReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "feasible"
        return "; ".join(f"{v.constraint}: {list(v.vertices)[:10]}" for v in self.violations)


def _same_side_degree(graph, x):
    """Number of neighbours sharing each vertex's label."""
    adj = graph.binary_adjacency
    return ((graph.degree + (adj @ x.astype(np.float64)) * x) / 2).astype(np.int64)


def check_feasibility(graph, part):
    x = _labels(graph, part)
    violations = []
    if not np.all(np.isin(x, (-1, 1))):
        violations.append(Violation("labels", tuple(np.flatnonzero(~np.isin(x, (-1, 1))))))
        return FeasibilityReport(violations)
    for sign in (1, -1):
        members = np.flatnonzero(x == sign)
        if len(members) == 0:
            violations.append(Violation(f"side {SIGN_FLUID[sign]} empty", ()))
            continue
        comp = _component_labels(graph.adjacency, x, sign)
        if comp.max() > 0:
            main = np.argmax(np.bincount(comp[members]))
            violations.append(Violation(f"side {SIGN_FLUID[sign]} disconnected",
                                        tuple(int(v) for v in members[comp[members] != main])))
    low = np.flatnonzero(_same_side_degree(graph, x) < 2)
    if len(low):
        violations.append(Violation("induced degree < 2", tuple(int(v) for v in low)))
    wrong = tuple(v for v, fl in sorted(graph.pinned.items()) if x[v] != FLUID_SIGN[fl])
    if wrong:
        violations.append(Violation("pin violated", wrong))
    return FeasibilityReport(violations)


def _component_labels(adjacency, x, sign):
    """Component id per vertex of side ``sign`` (-1 elsewhere)."""
    comp = -np.ones(len(x), dtype=np.int64)
    count = 0
    for root in np.flatnonzero(x == sign):
        if comp[root] >= 0:
            continue
        comp[root] = count
        stack = [root]
        while stack:
            for u in adjacency[stack.pop()]:
                if comp[u] < 0 and x[u] == sign:
                    comp[u] = count
                    stack.append(u)
        count += 1
    return comp


def is_feasible(graph, part):
    return check_feasibility(graph, part).ok


def _side_connected_without(adjacency, x, sign, removed, start, size):
    """BFS over side ``sign`` minus ``removed`` from ``start``; True if it reaches ``size`` vertices."""
    seen = {removed, start}
    queue = deque([start])
    reached = 1
    while queue:
        for u in adjacency[queue.popleft()]:
            if u not in seen and x[u] == sign:
                seen.add(u)
                reached += 1
                queue.append(u)
    return reached == size


# ---------------------------------------------------------------- initial partition


def _shortest_path(adjacency, sources, target, blocked):
    parent = {s: -1 for s in sources}
    queue = deque(sources)
    while queue:
        v = queue.popleft()
        if v == target:
            path = []
            while v != -1:
                path.append(v)
                v = parent[v]
            return path
        for u in adjacency[v]:
            u = int(u)
            if u not in parent and u not in blocked:
                parent[u] = v
                queue.append(u)
    return None


def _grow(graph, seeds_a, seeds_b, rng):
    """Connect same-fluid seeds by shortest paths, then grow both regions by alternating BFS."""
    n = graph.n_vertices
    adjacency = graph.adjacency
    x = np.zeros(n, dtype=np.int8)
    pins_b = set(seeds_b)

    x[seeds_a[0]] = 1
    for target in seeds_a[1:]:
        path = _shortest_path(adjacency, list(np.flatnonzero(x == 1)), target, pins_b)
        if path is None:
            return None
        x[path] = 1
    if x[seeds_b[0]] != 0:
        return None
    x[seeds_b[0]] = -1
    for target in seeds_b[1:]:
        path = _shortest_path(adjacency, list(np.flatnonzero(x == -1)), target,
                              set(np.flatnonzero(x == 1).tolist()))
        if path is None:
            return None
        x[path] = -1
    queues = {1: deque(np.flatnonzero(x == 1)), -1: deque(np.flatnonzero(x == -1))}
    while queues[1] or queues[-1]:
        for sign in (1, -1):
            if not queues[sign]:
                continue
            v = queues[sign].popleft()
            nbrs = adjacency[v].copy()
            rng.shuffle(nbrs)
            for u in nbrs:
                if x[u] == 0:
                    x[u] = sign
                    queues[sign].append(u)
    return x


def _count_components(adjacency, x, sign):
    seen = np.zeros(len(x), dtype=bool)
    count = 0
    for root in np.flatnonzero(x == sign):
        if seen[root]:
            continue
        count += 1
        seen[root] = True
        stack = [root]
        while stack:
            for u in adjacency[stack.pop()]:
                if not seen[u] and x[u] == sign:
                    seen[u] = True
                    stack.append(u)
    return count


def _deficit(same):
    return int(np.sum(np.clip(2 - same, 0, None)))


def _component_penalty(adjacency, x):
    n = len(x)
    total = 0
    for sign in (1, -1):
        c = _count_components(adjacency, x, sign)
        total += n if c == 0 else c - 1
    return total


def _repair(graph, x, budget, rng):
    """Min-conflicts repair.

    The violation count is the summed degree deficit below 2, plus surplus
    components per side, plus ``|V|`` per empty side.  Each move flips the
    non-pinned vertex (near a degree violation, when there is one) leaving
    the fewest violations; ties go to the larger cut gain, then at random.
    Undoing the previous move is not allowed.
    """
    adjacency = graph.adjacency
    wm = graph.weight_matrix
    deg = graph.degree
    frozen = np.zeros(graph.n_vertices, dtype=bool)
    frozen[list(graph.pinned)] = True
    same = _same_side_degree(graph, x)
    current = _deficit(same) + _component_penalty(adjacency, x)
    last = -1
    for _ in range(budget):
        if current == 0:
            return x
        bad = np.flatnonzero(same < 2)
        if len(bad):
            cands = np.unique(np.concatenate([bad] + [adjacency[v] for v in bad]))
        else:
            cands = np.arange(graph.n_vertices)
        cands = cands[~frozen[cands] & (cands != last)]
        if len(cands) == 0:
            return None
        base = _deficit(same)
        scores = np.full(len(cands), np.iinfo(np.int64).max)
        best_score = np.iinfo(np.int64).max
        for i, v in enumerate(cands):
            nbrs = adjacency[v]
            old = np.clip(2 - same[nbrs], 0, None).sum() + max(2 - same[v], 0)
            delta = np.where(x[nbrs] == x[v], -1, 1)
            new = np.clip(2 - (same[nbrs] + delta), 0, None).sum() + max(2 - (deg[v] - same[v]), 0)
            score = base - old + new
            if score > best_score:
                continue
            x[v] = -x[v]
            score += _component_penalty(adjacency, x)
            x[v] = -x[v]
            scores[i] = score
            best_score = min(best_score, score)
        best = cands[scores == best_score]
        gain = x[best] * (wm @ x.astype(np.float64))[best]
        best = best[gain == gain.max()]
        v = int(best[rng.integers(len(best))])
        nbrs = adjacency[v]
        same[nbrs] += np.where(x[nbrs] == x[v], -1, 1)
        same[v] = deg[v] - same[v]
        x[v] = -x[v]
        current = int(best_score)
        last = v
    return x if current == 0 else None


def _unconstrained_local_max(graph, x, frozen):
    """Plain best-flip max-cut ascent ignoring feasibility."""
    wm = graph.weight_matrix
    xf = x.astype(np.float64)
    for _ in range(10 * graph.n_vertices):
        gain = xf * (wm @ xf)
        gain[frozen] = -np.inf
        v = int(np.argmax(gain))
        if gain[v] <= 0:
            break
        xf[v] = -xf[v]
    return xf.astype(np.int8)


INIT_STRATEGIES = ("grow", "random")


def initial_partition(graph, seed=0, strategy="grow", attempts=8):
    """Feasible starting partition.

    ``strategy="grow"`` connects same-fluid pins by shortest paths and grows
    both regions by alternating BFS; ``"random"`` starts from random labels.
    Either is followed by a min-conflicts repair bounded at ``10 * |V|``
    moves.  Up to ``attempts`` re-randomised tries are made.
    """
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"strategy must be one of {INIT_STRATEGIES}")
    n = graph.n_vertices
    if n < 6:
        raise InfeasibleStart("a feasible partition needs at least 6 vertices")
    if not graph.is_connected():
        raise InfeasibleStart("graph is not connected")
    pins_a = sorted(v for v, fl in graph.pinned.items() if fl == "A")
    pins_b = sorted(v for v, fl in graph.pinned.items() if fl == "B")
    for attempt in range(attempts):
        rng = make_rng(seed, "initial_partition", strategy, attempt)
        if strategy == "random":
            x = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
            for v, fl in graph.pinned.items():
                x[v] = FLUID_SIGN[fl]
            frozen = np.zeros(n, dtype=bool)
            frozen[list(graph.pinned)] = True
            x = _unconstrained_local_max(graph, x, frozen)
        else:
            seeds_a, seeds_b = list(pins_a), list(pins_b)
            free = [v for v in range(n) if v not in graph.pinned]
            if not seeds_a:
                seeds_a = [int(rng.choice(free))]
                free.remove(seeds_a[0])
            if not seeds_b:
                seeds_b = [int(rng.choice(free))]
            x = _grow(graph, seeds_a, seeds_b, rng)
            if x is None:
                continue
        x = _repair(graph, x, 10 * n, rng)
        if x is not None and is_feasible(graph, Partition(x)):
            return Partition(x)
    raise InfeasibleStart(f"no feasible start found in {attempts} attempts")


# ---------------------------------------------------------------- local search


def _tie_groups(sorted_gains, tol):
    """Group ids for descending gains; gains within ``tol`` of a group's leader tie."""
    groups = np.empty(len(sorted_gains), dtype=np.int64)
    leader, gid = None, -1
    for i, g in enumerate(sorted_gains):
        if leader is None or leader - g > tol:
            leader, gid = g, gid + 1
        groups[i] = gid
    return groups


def optimize(graph, part, max_rounds=100_000):
    """Best-improvement single-vertex flips under the feasibility constraints.

    Each round evaluates the cut gain of flipping every non-pinned vertex,
    then applies the largest strictly positive gain whose flip keeps both
    sides connected with induced degree >= 2.  Gains within ``1e-9 * max w``
    of each other tie and go to the lowest index, so rounding noise never
    decides the move.
    """
    report = check_feasibility(graph, part)
    if not report:
        raise NotFeasible(f"initial partition infeasible: {report}")
    adjacency = graph.adjacency
    wm = graph.weight_matrix
    x = part.labels.astype(np.int8).copy()
    xf = x.astype(np.float64)
    signed = wm @ xf
    same = _same_side_degree(graph, x)
    deg = graph.degree
    sizes = {1: int(np.sum(x == 1)), -1: int(np.sum(x == -1))}
    frozen = np.zeros(graph.n_vertices, dtype=bool)
    frozen[list(graph.pinned)] = True
    tol = 1e-9 * (float(np.abs(graph.weights).max()) if len(graph.weights) else 1.0)

    objective = cut_value(graph, Partition(x))
    trace = CutTrace([TraceRecord(0, objective, -1)])

    def flip_ok(v):
        s = int(x[v])
        if deg[v] - same[v] < 2:
            return False
        start = -1
        for u in adjacency[v]:
            if x[u] == s:
                if same[u] - 1 < 2:
                    return False
                start = u
        if start < 0:
            return False
        return _side_connected_without(adjacency, x, s, v, start, sizes[s] - 1)

    for rnd in range(max_rounds):
        gain = xf * signed
        gain[frozen] = -np.inf
        cand = np.flatnonzero(gain > tol)
        if len(cand) == 0:
            break
        cand = cand[np.lexsort((cand, -gain[cand]))]
        cand = cand[np.lexsort((cand, _tie_groups(gain[cand], tol)))]
        chosen = next((int(v) for v in cand if flip_ok(v)), None)
        if chosen is None:
            break
        s = int(x[chosen])
        lo, hi = wm.indptr[chosen], wm.indptr[chosen + 1]
        nbrs, w = wm.indices[lo:hi], wm.data[lo:hi]
        x[chosen] = -s
        xf[chosen] = -s
        signed[nbrs] -= 2.0 * s * w
        same[nbrs] += np.where(x[nbrs] == -s, 1, -1)
        same[chosen] = deg[chosen] - same[chosen]
        sizes[s] -= 1
        sizes[-s] += 1
        objective += gain[chosen]
        trace.records.append(TraceRecord(rnd + 1, objective, chosen))
    return Partition(x), trace


# ---------------------------------------------------------------- exhaustive oracle


def brute_force(graph, chunk=1 << 15):
    """Best feasible partition by full enumeration (|V| <= 20).

    Returns ``(partition, weight)`` or ``(None, None)`` if nothing is feasible.
    """
    n = graph.n_vertices
    if n > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"|V| = {n} exceeds the enumeration limit {BRUTE_FORCE_LIMIT}")
    fixed = {v: FLUID_SIGN[fl] for v, fl in graph.pinned.items()}
    if not fixed:
        fixed = {0: 1}  # label symmetry
    free = np.array([v for v in range(n) if v not in fixed], dtype=np.int64)
    adj = graph.weight_matrix.toarray() != 0
    adjf = adj.astype(np.float64)
    deg = adj.sum(axis=1)
    u, v = graph.edges.T

    scored = []
    total = 1 << len(free)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = (codes[:, None] >> np.arange(len(free))) & 1
        X = np.empty((len(codes), n), dtype=np.int8)
        for vert, sign in fixed.items():
            X[:, vert] = sign
        X[:, free] = 1 - 2 * bits
        same = (deg + (X @ adjf) * X) / 2
        ok = np.all(same >= 2, axis=1) & np.any(X == 1, axis=1) & np.any(X == -1, axis=1)
        if not ok.any():
            continue
        cuts = (X[ok][:, u] != X[ok][:, v]).astype(np.float64) @ graph.weights
        scored.extend(zip(cuts.tolist(), codes[ok].tolist()))
    scored.sort(key=lambda t: (-t[0], t[1]))
    for value, code in scored:
        labels = np.empty(n, dtype=np.int8)
        for vert, sign in fixed.items():
            labels[vert] = sign
        labels[free] = 1 - 2 * ((code >> np.arange(len(free))) & 1)
        part = Partition(labels)
        if is_feasible(graph, part):
            return part, value
    return None, None


# ---------------------------------------------------------------- estimator


class ConnectedMaxCut(BaseEstimator):
    """Estimator wrapper around start construction and :func:`optimize`.

    ``fit(graph)`` runs ``n_init`` independent starts (like k-means restarts)
    and keeps the best final cut; ties keep the earliest start.  With
    ``init="auto"`` the first start grows from the pins and the rest use
    random labels on graphs of at most ``random_init_max_vertices`` vertices.

    Attributes set by ``fit``: ``labels_``, ``partition_``,
    ``initial_partition_``, ``trace_``, ``cut_value_``, ``n_iter_``.
    """

    def __init__(self, n_init=1, init="auto", max_rounds=100_000, start_attempts=8,
                 random_init_max_vertices=64, random_state=0):
        self.n_init = n_init
        self.init = init
        self.max_rounds = max_rounds
        self.start_attempts = start_attempts
        self.random_init_max_vertices = random_init_max_vertices
        self.random_state = random_state

    def _strategy(self, graph, k):
        if self.init != "auto":
            return self.init
        if k == 0 or graph.n_vertices > self.random_init_max_vertices:
            return "grow"
        return "random"

    def fit(self, graph, y=None):
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        best = None
        last_error = None
        for k in range(self.n_init):
            try:
                start = initial_partition(graph, seed=make_rng(self.random_state, "n_init", k)
                                         .integers(2 ** 63), strategy=self._strategy(graph, k),
                                         attempts=self.start_attempts)
            except InfeasibleStart as exc:
                last_error = exc
                continue
            part, trace = optimize(graph, start, self.max_rounds)
            value = cut_value(graph, part)
            if best is None or value > best[0]:
                best = (value, start, part, trace)
        if best is None:
            raise last_error
        self.cut_value_, self.initial_partition_, self.partition_, self.trace_ = best
        self.labels_ = self.partition_.labels
        self.n_iter_ = self.trace_.n_flips
        return self

    def fit_predict(self, graph, y=None):
        return self.fit(graph).labels_


# ---------------------------------------------------------------- skeleton files


@dataclass(frozen=True, eq=False)
class Skeleton:
    """One fluid's induced subgraph: coordinates plus local edge list."""

    fluid: str
    vertices: np.ndarray
    edges: np.ndarray
    indices: np.ndarray

    @property
    def segments(self):
        return self.vertices[self.edges]


def extract_skeletons(graph, part):
    out = []
    x = part.labels
    for fluid in ("A", "B"):
        idx = np.flatnonzero(x == FLUID_SIGN[fluid])
        local = -np.ones(graph.n_vertices, dtype=np.int64)
        local[idx] = np.arange(len(idx))
        keep = (x[graph.edges[:, 0]] == FLUID_SIGN[fluid]) & (x[graph.edges[:, 1]] == FLUID_SIGN[fluid])
        out.append(Skeleton(fluid, graph.vertices[idx], local[graph.edges[keep]], idx))
    return tuple(out)


def save_skeleton(skeleton, path, meta=None):
    payload = {
        "format": "dualms-skeleton",
        "version": 1,
        "meta": dict(meta or {}),
        "fluid": skeleton.fluid,
        "vertices": skeleton.vertices.tolist(),
        "edges": skeleton.edges.tolist(),
        "graph_indices": skeleton.indices.tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_skeleton(path):
    spec = json.loads(Path(path).read_text())
    if spec.get("format") != "dualms-skeleton":
        raise ValueError(f"{path} is not a skeleton file")
    return Skeleton(spec["fluid"], np.asarray(spec["vertices"], float).reshape(-1, 3),
                    np.asarray(spec["edges"], dtype=np.int64).reshape(-1, 2),
                    np.asarray(spec["graph_indices"], dtype=np.int64))
