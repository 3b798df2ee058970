"""Generalized Moebius parametrization of binary ADMG models.

The model for a binary vector X over an ADMG G is parametrized by
``q(H | T = t) = P(X_H = 0 | X_T = t)`` for every head H with tail T and
every binary tail assignment t.  Joint probabilities come out of an
inclusion-exclusion sum: writing O for the set of vertices at level 0 in
a state i,

    p(i) = sum over O <= C <= V of (-1)^{|C - O|}
           prod over H in the head partition of C of q(H | T = i_T),

and the sum factorizes over districts, one factor per district D using
only the subsets C of D and the zero set O restricted to D.

Per district the factor is affine in the parameter vector: it equals
``M @ t(q)`` where every column of M is one (C, tail assignment) term
and ``t_k(q)`` is the product of the parameters listed in row k of the
0/1 matrix P.  M and P are sparse and built once per graph; everything
downstream (likelihood, gradients, the Jacobian of p with respect to q)
is expressed through them.

Canonical orderings
-------------------
Joint states are indexed in binary counting order with the first vertex
as the most significant bit.  Parameters are grouped by district
(districts ordered by smallest member), heads within a district in
binary counting order over district members (least significant first),
and tail assignments in binary counting order with the earliest tail
vertex most significant.  Term columns use the same subset order for C
and counting order for tail assignments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .graph import Admg, Vertex, _bits
from .heads import heads, _partition_masks, _tail_mask

__all__ = [
    "Param",
    "ParamTable",
    "Term",
    "DistrictMaps",
    "Parametrization",
    "enumerate_params",
    "build_district_maps",
    "parametrization",
    "prob_vector",
    "prob_direct",
    "q_from_p",
    "state_index",
]

MAX_VERTICES = 20  # 2^|V| joint states must stay addressable


@dataclass(frozen=True)
class Param:
    """One parameter q(head | tail = tail_state)."""

    head: tuple[Vertex, ...]
    tail: tuple[Vertex, ...]
    tail_state: tuple[int, ...]

    @property
    def name(self) -> str:
        h = ",".join(str(v) for v in self.head)
        if not self.tail:
            return f"q[{h}]"
        t = ",".join(str(v) for v in self.tail)
        s = "".join(str(b) for b in self.tail_state)
        return f"q[{h}|{t}={s}]"


@dataclass(frozen=True)
class Term:
    """One inclusion-exclusion term: a subset C with a tail assignment.

    ``blocks`` is the head partition of C; the term's value is the
    product of the block parameters at this tail assignment, and its
    sign in row i of M is (-1)^{|C - O(i)|}.
    """

    c: tuple[Vertex, ...]
    blocks: tuple[tuple[Vertex, ...], ...]
    tail: tuple[Vertex, ...]
    tail_state: tuple[int, ...]


def state_index(state: Sequence[int]) -> int:
    """Row index of a joint 0/1 state, first vertex most significant."""
    idx = 0
    for b in state:
        idx = idx << 1 | (b & 1)
    return idx


def _state_bits(g: Admg) -> np.ndarray:
    """(2^n, n) matrix of joint states in canonical row order."""
    if "bits" not in g._memo:
        n = len(g.vertices)
        rows = np.arange(1 << n, dtype=np.int64)
        g._memo["bits"] = (rows[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return g._memo["bits"]


def _tail_rank(row: int, n: int, tpos: tuple[int, ...]) -> int:
    r = 0
    for p in tpos:
        r = r << 1 | (row >> (n - 1 - p)) & 1
    return r


class ParamTable:
    """Canonical parameter enumeration for a graph.

    Supports position lookup by head and tail assignment, and exposes
    the contiguous slice of parameters belonging to each district.
    """

    def __init__(self, g: Admg):
        if len(g.vertices) > MAX_VERTICES:
            raise ValueError(f"too many vertices ({len(g.vertices)})")
        self.graph = g
        n = len(g.vertices)
        params: list[Param] = []
        lookup: dict[tuple[int, int], int] = {}
        slices: list[tuple[tuple[Vertex, ...], slice]] = []
        start = 0
        by_district: dict[int, list] = {}
        dmasks = g._district_masks(g.full_mask)
        for ht in heads(g):
            h_mask = g._as_mask(ht.head)
            d_idx = next(k for k, dm in enumerate(dmasks) if dm & h_mask)
            by_district.setdefault(d_idx, []).append((ht, h_mask))
        for d_idx, dm in enumerate(dmasks):
            begin = start
            for ht, h_mask in by_district.get(d_idx, []):
                tpos = tuple(g._index[v] for v in ht.tail)
                for s in range(1 << len(tpos)):
                    lookup[(h_mask, s)] = start
                    bits = tuple(s >> (len(tpos) - 1 - j) & 1 for j in range(len(tpos)))
                    params.append(Param(ht.head, ht.tail, bits))
                    start += 1
            slices.append((g._labels(dm), slice(begin, start)))
        self.params: tuple[Param, ...] = tuple(params)
        self._lookup = lookup
        self.district_slices = tuple(slices)
        self._n = n

    def __len__(self) -> int:
        return len(self.params)

    def __iter__(self):
        return iter(self.params)

    def index(self, head: Iterable[Vertex], tail_state: Sequence[int] = ()) -> int:
        """Global position of q(head | tail = tail_state); the state is
        given in canonical tail order."""
        h_mask = self.graph._as_mask(head)
        rank = 0
        for b in tail_state:
            rank = rank << 1 | (b & 1)
        try:
            return self._lookup[(h_mask, rank)]
        except KeyError:
            raise KeyError(f"no parameter for head {tuple(head)!r}") from None

    def _index_by_row(self, h_mask: int, row: int) -> int:
        """Position of the parameter for head ``h_mask`` with its tail
        read off the joint state with row index ``row``."""
        tpos = tuple(_bits(_tail_mask(self.graph, h_mask)))
        return self._lookup[(h_mask, _tail_rank(row, self._n, tpos))]

    def district_slice(self, district: Iterable[Vertex]) -> slice:
        want = tuple(district)
        for d, sl in self.district_slices:
            if d == want:
                return sl
        raise KeyError(f"{want!r} is not a district")


def enumerate_params(g: Admg) -> ParamTable:
    """The canonical parameter table of ``g`` (cached on the graph)."""
    if "params" not in g._memo:
        g._memo["params"] = ParamTable(g)
    return g._memo["params"]


class _VertexPlan:
    """Static assembly data for one vertex's affine likelihood form.

    Within its district factor ``M @ t(q)``, every term has at most one
    factor that is a parameter with vertex v in the head.  Splitting
    each term product into that factor times the rest gives
    ``f = A(q_rest) @ theta - b(q_rest)`` with theta the v-parameters.
    """

    __slots__ = ("theta_cols", "rest", "scatter", "const_ids", "M_const", "theta_terms")

    def __init__(self, maps: "DistrictMaps", theta_set: set[int]):
        P_indptr, P_indices = maps.P_indptr, maps.P_indices
        K = len(P_indptr) - 1
        theta_cols = np.array(sorted(theta_set), dtype=np.int64)
        pos_of = {c: k for k, c in enumerate(theta_cols)}
        rest_indptr = np.zeros(K + 1, dtype=np.int64)
        rest_indices = []
        s_rows = []
        s_cols = []
        const = []
        for k in range(K):
            cols = P_indices[P_indptr[k] : P_indptr[k + 1]]
            mine = [c for c in cols if c in theta_set]
            if len(mine) > 1:
                raise AssertionError("term with two parameters of one vertex")
            if mine:
                s_rows.append(k)
                s_cols.append(pos_of[mine[0]])
            else:
                const.append(k)
            others = [c for c in cols if c not in theta_set]
            rest_indices.extend(others)
            rest_indptr[k + 1] = rest_indptr[k] + len(others)
        self.theta_cols = theta_cols
        self.rest = (rest_indptr, np.array(rest_indices, dtype=np.int64))
        # scatter rows follow term order, so its csr data slots align
        # one-to-one with theta_terms
        scatter = sparse.csr_matrix(
            (np.ones(len(s_rows)), (s_rows, s_cols)),
            shape=(K, len(theta_cols)),
        )
        scatter.sort_indices()
        self.scatter = scatter
        self.const_ids = np.array(const, dtype=np.int64)
        self.M_const = maps.M[:, self.const_ids].tocsr()
        self.theta_terms = np.array(s_rows, dtype=np.int64)


class DistrictMaps:
    """Sparse M and P matrices of one district plus assembly plans.

    Rows of M are the 2^|V| joint states; columns are terms.  Rows of P
    are terms; columns are the district's parameters (local indexing,
    offset by ``sl.start`` globally).
    """

    def __init__(self, g: Admg, district: Iterable[Vertex]):
        table = enumerate_params(g)
        self.graph = g
        self.district = tuple(district)
        self.sl = table.district_slice(self.district)
        n = len(g.vertices)
        members = [g._index[v] for v in self.district]
        if members != sorted(members):
            raise ValueError("district must be in canonical order")
        m = len(members)
        d_mask = 0
        for p in members:
            d_mask |= 1 << p
        self.members = tuple(members)
        self.d_mask = d_mask

        # local offsets of each head's parameter run
        local_offset: dict[int, int] = {}
        head_tpos: dict[int, tuple[int, ...]] = {}
        for j in range(self.sl.start, self.sl.stop):
            param = table.params[j]
            h_mask = g._as_mask(param.head)
            if h_mask not in local_offset:
                local_offset[h_mask] = j - self.sl.start
                head_tpos[h_mask] = tuple(g._index[v] for v in param.tail)

        # enumerate terms: subsets C of the district in counting order,
        # then tail assignments of the union of block tails
        terms: list[Term] = []
        P_rows: list[list[int]] = []
        c_start: list[int] = []
        c_tpos: list[tuple[int, ...]] = []
        col = 0
        for c_local in range(1 << m):
            c_mask = 0
            for k in range(m):
                if c_local >> k & 1:
                    c_mask |= 1 << members[k]
            blocks = _partition_masks(g, c_mask)
            tails = [_tail_mask(g, b) for b in blocks]
            t_union = 0
            for t in tails:
                t_union |= t
            tpos = tuple(_bits(t_union))
            c_start.append(col)
            c_tpos.append(tpos)
            for s in range(1 << len(tpos)):
                cols = []
                for b, t in zip(blocks, tails):
                    btp = head_tpos[b]
                    rank = 0
                    for p in btp:
                        j = tpos.index(p)
                        rank = rank << 1 | (s >> (len(tpos) - 1 - j) & 1)
                    cols.append(local_offset[b] + rank)
                cols.sort()
                P_rows.append(cols)
                terms.append(
                    Term(
                        g._labels(c_mask),
                        tuple(g._labels(b) for b in blocks),
                        g._labels(t_union),
                        tuple(s >> (len(tpos) - 1 - j) & 1 for j in range(len(tpos))),
                    )
                )
            col += 1 << len(tpos)
        K = col
        self.terms = tuple(terms)
        P_indptr = np.zeros(K + 1, dtype=np.int64)
        for k, cols in enumerate(P_rows):
            P_indptr[k + 1] = P_indptr[k] + len(cols)
        P_indices = np.array(
            [c for cols in P_rows for c in cols], dtype=np.int64
        )
        self.P_indptr = P_indptr
        self.P_indices = P_indices
        self.P = sparse.csr_matrix(
            (np.ones(len(P_indices)), P_indices, P_indptr),
            shape=(K, self.sl.stop - self.sl.start),
        )

        # M: for each joint state, submasks E of the district's ones
        # give the subsets C = O + E with sign (-1)^|E|
        local_of = {p: k for k, p in enumerate(members)}
        rows_ix: list[int] = []
        cols_ix: list[int] = []
        vals: list[float] = []
        R = 1 << n
        for r in range(R):
            ones = 0
            for p in members:
                if r >> (n - 1 - p) & 1:
                    ones |= 1 << p
            o_mask = d_mask & ~ones
            e = ones
            while True:
                c_mask = o_mask | e
                c_local = 0
                for p in _bits(c_mask):
                    c_local |= 1 << local_of[p]
                tpos = c_tpos[c_local]
                cix = c_start[c_local] + _tail_rank(r, n, tpos)
                rows_ix.append(r)
                cols_ix.append(cix)
                vals.append(-1.0 if bin(e).count("1") & 1 else 1.0)
                if e == 0:
                    break
                e = (e - 1) & ones
        self.M = sparse.csr_matrix(
            (vals, (rows_ix, cols_ix)), shape=(R, K)
        )
        self.M.sort_indices()

        theta_sets: dict[int, set[int]] = {p: set() for p in members}
        for j in range(self.sl.start, self.sl.stop):
            h_mask = g._as_mask(table.params[j].head)
            for p in _bits(h_mask):
                theta_sets[p].add(j - self.sl.start)
        self.plans = {p: _VertexPlan(self, theta_sets[p]) for p in members}

    @property
    def n_terms(self) -> int:
        return self.M.shape[1]

    def term_values(self, q_local: np.ndarray, term_products) -> np.ndarray:
        return term_products(self.P_indptr, self.P_indices, q_local)

    def factor(self, q_local: np.ndarray, term_products) -> np.ndarray:
        """The district's factor of the joint probability vector."""
        return self.M @ self.term_values(q_local, term_products)

    def affine(self, q_local: np.ndarray, vertex: int, term_products):
        """Dense (A, b) with factor = A @ theta - b, theta being the
        parameters whose head contains ``vertex`` (a canonical position)."""
        plan = self.plans[vertex]
        r = term_products(*plan.rest, q_local)
        plan.scatter.data[:] = r[plan.theta_terms]
        A = (self.M @ plan.scatter).toarray()
        b = -(plan.M_const @ r[plan.const_ids])
        return A, b, plan.theta_cols


def build_district_maps(g: Admg, district: Iterable[Vertex]) -> DistrictMaps:
    return DistrictMaps(g, district)


class Parametrization:
    """All district maps of a graph bundled with its parameter table."""

    def __init__(self, g: Admg):
        self.graph = g
        self.table = enumerate_params(g)
        self.maps = tuple(DistrictMaps(g, d) for d in g.districts())

    def factors(self, q: np.ndarray, term_products) -> list[np.ndarray]:
        return [dm.factor(q[dm.sl], term_products) for dm in self.maps]

    def prob(self, q: np.ndarray, term_products) -> np.ndarray:
        p = np.ones(1 << len(self.graph.vertices))
        for f in self.factors(q, term_products):
            p *= f
        return p


def parametrization(g: Admg) -> Parametrization:
    if "parametrization" not in g._memo:
        g._memo["parametrization"] = Parametrization(g)
    return g._memo["parametrization"]


def prob_vector(g: Admg, q: np.ndarray) -> np.ndarray:
    """Joint probabilities of all 2^|V| states in canonical row order.

    Entries sum to one for any parameter vector; they are nonnegative
    exactly when ``q`` lies in the model's parameter space.
    """
    from ._kernels import get_kernels

    q = np.asarray(q, dtype=float)
    par = parametrization(g)
    if len(q) != len(par.table):
        raise ValueError(f"expected {len(par.table)} parameters, got {len(q)}")
    return par.prob(q, get_kernels().term_products)


def prob_direct(g: Admg, q: np.ndarray, state: Sequence[int]) -> float:
    """One joint probability by the raw inclusion-exclusion sum.

    Exponential in |V|; exists as a slow reference implementation that
    shares no machinery with the matrix evaluation in
    :func:`prob_vector`.
    """
    q = np.asarray(q, dtype=float)
    table = enumerate_params(g)
    n = len(g.vertices)
    if len(state) != n:
        raise ValueError("state length mismatch")
    row = state_index(state)
    # the state tuple is in canonical vertex order; position masks use
    # bit k for the k-th vertex
    o_mask = 0
    for k, b in enumerate(state):
        if not b & 1:
            o_mask |= 1 << k
    ones = g.full_mask & ~o_mask
    total = 0.0
    e = ones
    while True:
        c_mask = o_mask | e
        sign = -1.0 if bin(e).count("1") & 1 else 1.0
        prod = sign
        for b in _partition_masks(g, c_mask):
            prod *= q[table._index_by_row(b, row)]
        total += prod
        if e == 0:
            break
        e = (e - 1) & ones
    return total


def q_from_p(g: Admg, p: np.ndarray) -> np.ndarray:
    """Parameters of a joint distribution: every q(H | T = t) is read
    off ``p`` as a conditional probability.  Requires all conditioning
    events to have positive probability."""
    p = np.asarray(p, dtype=float)
    table = enumerate_params(g)
    bits = _state_bits(g)
    n = len(g.vertices)
    if len(p) != 1 << n:
        raise ValueError("probability vector has wrong length")
    q = np.empty(len(table))
    for j, param in enumerate(table.params):
        hpos = [g._index[v] for v in param.head]
        tpos = [g._index[v] for v in param.tail]
        sel = np.ones(len(p), dtype=bool)
        for pos, b in zip(tpos, param.tail_state):
            sel &= bits[:, pos] == b
        den = p[sel].sum()
        if den <= 0:
            raise ValueError(f"conditioning event of {param.name} has mass {den}")
        num = p[sel & (bits[:, hpos] == 0).all(axis=1)].sum()
        q[j] = num / den
    return q
