"""Condensation structure of a signed digraph and the agent classification.

Nodes split into opinion leaders (members of sink components of the
condensation DAG, topologically unaffected by outsiders) and followers
(everyone else).  Each sink is further classified by the structural
balance of its induced signed subgraph, which decides whether its members
can sustain a nonzero limit without stubbornness.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .graph import SignedDigraph

__all__ = [
    "Role",
    "SinkClass",
    "SccPartition",
    "CondensationDag",
    "BalanceResult",
    "SinkInfo",
    "AgentClassification",
    "CanonicalOrdering",
    "strongly_connected_components",
    "condense",
    "balance_check",
    "classify_agents",
    "canonical_ordering",
    "classification_to_dict",
]


class Role(Enum):
    FOLLOWER = "follower"
    OPINION_LEADER = "opinion_leader"


class SinkClass(str, Enum):
    SINGLETON_SB = "singleton_sb"
    COOPERATIVE_SB = "cooperative_sb"
    ANTAGONISTIC_SB = "antagonistic_sb"
    SUB = "sub"

    @property
    def is_balanced(self) -> bool:
        return self is not SinkClass.SUB


@dataclass(frozen=True, eq=False)
class SccPartition:
    """Partition of nodes into strongly connected components.

    Component ids are canonical: sorted by smallest member node index, so
    the partition (and everything derived from it) is reproducible.
    """

    scc_id: np.ndarray
    components: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class CondensationDag:
    """The acyclic component graph; ``sinks`` lists components with out-degree 0."""

    n_components: int
    edges: frozenset[tuple[int, int]]
    sinks: tuple[int, ...]


def strongly_connected_components(graph: SignedDigraph) -> SccPartition:
    """Tarjan's algorithm, iterative to survive deep recursions on real data."""
    n = graph.n
    adj = graph.adjacency
    indptr, indices = adj.indptr, adj.indices

    order = np.full(n, -1, dtype=np.int64)
    low = np.zeros(n, dtype=np.int64)
    on_stack = np.zeros(n, dtype=bool)
    stack: list[int] = []
    components: list[list[int]] = []
    counter = 0

    for root in range(n):
        if order[root] != -1:
            continue
        # frames of (node, index of next out-edge to scan)
        frames: list[list[int]] = [[root, indptr[root]]]
        order[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while frames:
            v, ptr = frames[-1]
            if ptr < indptr[v + 1]:
                frames[-1][1] += 1
                u = int(indices[ptr])
                if order[u] == -1:
                    order[u] = low[u] = counter
                    counter += 1
                    stack.append(u)
                    on_stack[u] = True
                    frames.append([u, indptr[u]])
                elif on_stack[u]:
                    if order[u] < low[v]:
                        low[v] = order[u]
            else:
                frames.pop()
                if frames:
                    parent = frames[-1][0]
                    if low[v] < low[parent]:
                        low[parent] = low[v]
                if low[v] == order[v]:
                    comp = []
                    while True:
                        u = stack.pop()
                        on_stack[u] = False
                        comp.append(u)
                        if u == v:
                            break
                    components.append(comp)

    components.sort(key=min)
    scc_id = np.empty(n, dtype=np.int64)
    canon = []
    for cid, comp in enumerate(components):
        comp_sorted = tuple(sorted(comp))
        canon.append(comp_sorted)
        for i in comp_sorted:
            scc_id[i] = cid
    scc_id.setflags(write=False)
    return SccPartition(scc_id=scc_id, components=tuple(canon))


def condense(graph: SignedDigraph, sccs: SccPartition) -> CondensationDag:
    """Collapse each component to a node; a sink has no outgoing DAG edge."""
    cid = sccs.scc_id
    edges = {
        (int(cid[s]), int(cid[t]))
        for s, t in zip(graph.sources, graph.targets)
        if cid[s] != cid[t]
    }
    has_out = np.zeros(len(sccs.components), dtype=bool)
    for i, _ in edges:
        has_out[i] = True
    sinks = tuple(int(i) for i in np.flatnonzero(~has_out))
    return CondensationDag(
        n_components=len(sccs.components), edges=frozenset(edges), sinks=sinks
    )


@dataclass(frozen=True, eq=False)
class BalanceResult:
    """2-coloring verdict for a signed subgraph.

    ``labels`` is aligned with ``nodes`` (ascending node indices) and is
    ``None`` when the subgraph is unbalanced.  The smallest-index node is
    labeled +1 by convention so signs are reproducible.
    """

    balanced: bool
    labels: np.ndarray | None
    nodes: tuple[int, ...]


def balance_check(graph: SignedDigraph, nodes) -> BalanceResult:
    """Structural balance of the subgraph induced by ``nodes``.

    Works on the undirected closure: a positive edge constrains its
    endpoints to equal labels, a negative edge to opposite labels, in
    either direction.  An antiparallel pair with opposite signs is
    therefore a conflict, and a negative self-loop can never be satisfied.
    Positive self-loops impose nothing and are ignored.
    """
    nodes = tuple(sorted({int(i) for i in nodes}))
    pos = {v: k for k, v in enumerate(nodes)}
    member = np.zeros(graph.n, dtype=bool)
    member[list(nodes)] = True

    adjacency: list[list[tuple[int, int]]] = [[] for _ in nodes]
    conflict = False
    for s, t, w in graph.edge_triples():
        if not (member[s] and member[t]):
            continue
        if s == t:
            if w < 0:
                conflict = True
            continue
        sign = 1 if w > 0 else -1
        adjacency[pos[s]].append((pos[t], sign))
        adjacency[pos[t]].append((pos[s], sign))

    labels = np.zeros(len(nodes), dtype=np.int64)
    balanced = not conflict
    for seed in range(len(nodes)):
        if labels[seed] != 0:
            continue
        labels[seed] = 1
        queue = deque([seed])
        while queue:
            u = queue.popleft()
            for v, sign in adjacency[u]:
                want = labels[u] * sign
                if labels[v] == 0:
                    labels[v] = want
                    queue.append(v)
                elif labels[v] != want:
                    balanced = False

    if not balanced:
        return BalanceResult(balanced=False, labels=None, nodes=nodes)
    labels.setflags(write=False)
    return BalanceResult(balanced=True, labels=labels, nodes=nodes)


@dataclass(frozen=True)
class SinkInfo:
    """One sink of the condensation: membership, balance class, stubbornness."""

    sink_index: int
    component: int
    members: tuple[int, ...]
    sink_class: SinkClass
    bipartition: tuple[int, ...] | None
    contains_stubborn: bool
    in_s_ns: bool


@dataclass(frozen=True, eq=False)
class AgentClassification:
    """Per-node roles plus the per-sink classification.

    ``s_ns`` holds the indices of balanced sinks with no stubborn member;
    these are exactly the sinks whose members keep a nonzero limit of
    their own and make the update matrix semi-convergent.
    """

    roles: tuple[Role, ...]
    sink_of: np.ndarray
    sinks: tuple[SinkInfo, ...]
    s_ns: frozenset[int]

    @property
    def n(self) -> int:
        return len(self.roles)

    @property
    def follower_count(self) -> int:
        return int(np.count_nonzero(self.sink_of < 0))


def classify_agents(
    graph: SignedDigraph, sccs: SccPartition, dag: CondensationDag, beta
) -> AgentClassification:
    """Assign roles and classify every sink of the condensation.

    A single-node sink is balanced by definition.  A multi-member sink is
    cooperative when all its internal edges are positive, antagonistic
    when balanced with at least one negative edge, and unbalanced (SUB)
    otherwise.  A sink lands in ``s_ns`` iff it is balanced and none of
    its members is stubborn.
    """
    beta = np.asarray(beta, dtype=np.float64)
    sink_of = np.full(graph.n, -1, dtype=np.int64)
    sinks: list[SinkInfo] = []

    for k, cid in enumerate(dag.sinks):
        members = sccs.components[cid]
        stubborn = bool(np.any(beta[list(members)] > 0))
        if len(members) == 1:
            sink_class = SinkClass.SINGLETON_SB
            bipartition: tuple[int, ...] | None = (1,)
        else:
            result = balance_check(graph, members)
            if not result.balanced:
                sink_class = SinkClass.SUB
                bipartition = None
            else:
                member_mask = np.zeros(graph.n, dtype=bool)
                member_mask[list(members)] = True
                internal = member_mask[graph.sources] & member_mask[graph.targets]
                has_negative = bool(np.any(graph.weights[internal] < 0))
                sink_class = (
                    SinkClass.ANTAGONISTIC_SB if has_negative else SinkClass.COOPERATIVE_SB
                )
                bipartition = tuple(int(x) for x in result.labels)
        sinks.append(
            SinkInfo(
                sink_index=k,
                component=cid,
                members=members,
                sink_class=sink_class,
                bipartition=bipartition,
                contains_stubborn=stubborn,
                in_s_ns=sink_class.is_balanced and not stubborn,
            )
        )
        for i in members:
            sink_of[i] = k

    roles = tuple(
        Role.OPINION_LEADER if sink_of[i] >= 0 else Role.FOLLOWER for i in range(graph.n)
    )
    sink_of.setflags(write=False)
    return AgentClassification(
        roles=roles,
        sink_of=sink_of,
        sinks=tuple(sinks),
        s_ns=frozenset(s.sink_index for s in sinks if s.in_s_ns),
    )


@dataclass(frozen=True, eq=False)
class CanonicalOrdering:
    """Node permutation putting followers first, then each sink contiguously.

    ``permutation[p]`` is the original index of the node at canonical slot
    ``p``; ``inverse`` maps the other way.  Applying it to the update
    matrix produces the block-triangular shape the solver relies on.
    """

    permutation: np.ndarray
    inverse: np.ndarray
    follower_count: int
    sink_offsets: tuple[int, ...]
    sink_sizes: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.permutation)

    def sink_slice(self, sink_index: int) -> slice:
        off = self.sink_offsets[sink_index]
        return slice(off, off + self.sink_sizes[sink_index])


def canonical_ordering(classification: AgentClassification) -> CanonicalOrdering:
    """Followers ascending, then sinks by ascending sink index, members ascending."""
    n = classification.n
    followers = [i for i in range(n) if classification.sink_of[i] < 0]
    perm = list(followers)
    offsets: list[int] = []
    sizes: list[int] = []
    for sink in classification.sinks:
        offsets.append(len(perm))
        sizes.append(len(sink.members))
        perm.extend(sink.members)
    permutation = np.asarray(perm, dtype=np.int64)
    inverse = np.empty(n, dtype=np.int64)
    inverse[permutation] = np.arange(n, dtype=np.int64)
    permutation.setflags(write=False)
    inverse.setflags(write=False)
    return CanonicalOrdering(
        permutation=permutation,
        inverse=inverse,
        follower_count=len(followers),
        sink_offsets=tuple(offsets),
        sink_sizes=tuple(sizes),
    )


def classification_to_dict(
    classification: AgentClassification, labels: tuple[str, ...]
) -> dict:
    """JSON-ready view: per-node role/sink, per-sink class and members, s_ns."""
    nodes = []
    for i, role in enumerate(classification.roles):
        entry: dict = {"node": labels[i], "role": role.value}
        k = int(classification.sink_of[i])
        if k >= 0:
            entry["sink"] = k
            sink = classification.sinks[k]
            if sink.bipartition is not None:
                entry["side"] = sink.bipartition[sink.members.index(i)]
        nodes.append(entry)
    sinks = [
        {
            "index": s.sink_index,
            "members": [labels[i] for i in s.members],
            "class": s.sink_class.value,
            "contains_stubborn": s.contains_stubborn,
            "in_s_ns": s.in_s_ns,
        }
        for s in classification.sinks
    ]
    return {
        "follower_count": classification.follower_count,
        "leader_count": classification.n - classification.follower_count,
        "nodes": nodes,
        "sinks": sinks,
        "s_ns": sorted(classification.s_ns),
    }
