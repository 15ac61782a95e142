"""
Minimum-cost flow on integer networks.

Successive shortest augmenting paths with node potentials: Bellman-Ford
gives the initial potentials, after which every shortest path is found by
Dijkstra on non-negative reduced costs. All arithmetic uses Python integers,
so optima are exact.
"""
from dataclasses import dataclass
import heapq
from typing import List, Tuple

import numpy as np

from aiida.common.log import AIIDA_LOGGER

from aiida_finebalance.exceptions import NetworkError

LOGGER = AIIDA_LOGGER.getChild("finebalance.netflow")

DEFAULT_SCALE = 10_000
# largest cost magnitude the solver accepts after scaling
MAX_COST = 2**62
INFINITY = float("inf")


@dataclass(frozen=True)
class Arc:
    """Directed arc with an integer capacity and cost."""

    tail: int
    head: int
    capacity: int
    cost: int


class FlowNetwork:
    """Nodes with integer supplies and a list of arcs.

    Positive supply is a source, negative supply a demand.
    """

    def __init__(self):
        self.supplies: List[int] = []
        self.arcs: List[Arc] = []
        self.labels: List[str] = []

    @property
    def n_nodes(self):
        return len(self.supplies)

    def add_node(self, supply: int = 0, label: str = "") -> int:
        """Add a node and return its index."""
        self.supplies.append(int(supply))
        self.labels.append(label or f"n{len(self.supplies) - 1}")
        return len(self.supplies) - 1

    def add_arc(self, tail: int, head: int, capacity: int, cost: int = 0) -> int:
        """Add an arc and return its index."""
        self.arcs.append(Arc(int(tail), int(head), int(capacity), int(cost)))
        return len(self.arcs) - 1

    def validate(self):
        """Check the network is well formed.

        :raises NetworkError: on unbalanced supplies, negative capacities,
            unknown endpoints or costs beyond the solver's integer range
        """
        total = sum(self.supplies)
        if total != 0:
            raise NetworkError(f"Node supplies sum to {total}, not 0.")
        for index, arc in enumerate(self.arcs):
            if arc.capacity < 0:
                raise NetworkError(f"Arc {index} has negative capacity {arc.capacity}.")
            if not (0 <= arc.tail < self.n_nodes and 0 <= arc.head < self.n_nodes):
                raise NetworkError(f"Arc {index} joins unknown nodes {arc.tail} -> {arc.head}.")
            if abs(arc.cost) > MAX_COST:
                raise NetworkError(f"Arc {index} cost {arc.cost} exceeds the solver's integer range.")

    def dump(self, path):
        """Write the network as a plain-text arc list.

        One ``node <index> <label> <supply>`` line per node followed by one
        ``arc <index> <tail> <head> <capacity> <cost>`` line per arc.
        """
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(f"# nodes {self.n_nodes} arcs {len(self.arcs)}\n")
            for index, (label, supply) in enumerate(zip(self.labels, self.supplies)):
                handle.write(f"node {index} {label} {supply}\n")
            for index, arc in enumerate(self.arcs):
                handle.write(f"arc {index} {arc.tail} {arc.head} {arc.capacity} {arc.cost}\n")


@dataclass(frozen=True)
class FlowSolution:
    """Flow per arc, in the order the arcs were added."""

    flow: Tuple[int, ...]
    total_cost: int
    feasible: bool


class _Residual:
    """Residual graph; arc ``e`` and ``e ^ 1`` are each other's reverse."""

    def __init__(self, n_nodes):
        self.head: List[int] = []
        self.cap: List[int] = []
        self.cost: List[int] = []
        self.out: List[List[int]] = [[] for _ in range(n_nodes)]

    def add(self, tail, head, capacity, cost):
        self.out[tail].append(len(self.head))
        self.head.append(head)
        self.cap.append(capacity)
        self.cost.append(cost)
        self.out[head].append(len(self.head))
        self.head.append(tail)
        self.cap.append(0)
        self.cost.append(-cost)

    def tail(self, edge):
        return self.head[edge ^ 1]


def _initial_potentials(graph: _Residual, n_nodes: int) -> List[int]:
    # Bellman-Ford from a virtual root joined to every node at cost 0
    potential = [0] * n_nodes
    for _ in range(n_nodes):
        changed = False
        for edge, capacity in enumerate(graph.cap):
            if capacity <= 0:
                continue
            candidate = potential[graph.tail(edge)] + graph.cost[edge]
            if candidate < potential[graph.head[edge]]:
                potential[graph.head[edge]] = candidate
                changed = True
        if not changed:
            return potential
    raise NetworkError("Network contains a negative-cost cycle.")


def _shortest_path(graph: _Residual, potential, source, sink):
    """Dijkstra on reduced costs; ties go to the lowest node index."""
    dist = [INFINITY] * len(potential)
    parent = [-1] * len(potential)
    done = [False] * len(potential)
    dist[source] = 0
    heap = [(0, source)]
    while heap:
        d_u, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == sink:
            break
        for edge in graph.out[u]:
            if graph.cap[edge] <= 0:
                continue
            v = graph.head[edge]
            if done[v]:
                continue
            candidate = d_u + graph.cost[edge] + potential[u] - potential[v]
            if candidate < dist[v]:
                dist[v] = candidate
                parent[v] = edge
                heapq.heappush(heap, (candidate, v))
    return dist, parent


def solve_mcf(net: FlowNetwork) -> FlowSolution:
    """Minimum-cost flow satisfying every supply and demand.

    :param net: well formed network with integer data
    :returns: an optimal integral flow, or ``feasible=False`` with zero flow
        when the supplies cannot all be routed
    :raises NetworkError: for malformed networks or a failed optimality check
    """
    net.validate()
    n = net.n_nodes
    source, sink = n, n + 1
    graph = _Residual(n + 2)
    for arc in net.arcs:
        graph.add(arc.tail, arc.head, arc.capacity, arc.cost)
    required = 0
    for node, supply in enumerate(net.supplies):
        if supply > 0:
            graph.add(source, node, supply, 0)
            required += supply
        elif supply < 0:
            graph.add(node, sink, -supply, 0)

    potential = _initial_potentials(graph, n + 2)
    sent = 0
    augmentations = 0
    while sent < required:
        dist, parent = _shortest_path(graph, potential, source, sink)
        if dist[sink] == INFINITY:
            LOGGER.debug(f"Network infeasible: routed {sent} of {required} units")
            return FlowSolution(flow=tuple(0 for _ in net.arcs), total_cost=0, feasible=False)
        for node, value in enumerate(dist):
            potential[node] += min(value, dist[sink])

        bottleneck = required - sent
        node = sink
        while node != source:
            edge = parent[node]
            bottleneck = min(bottleneck, graph.cap[edge])
            node = graph.tail(edge)
        node = sink
        while node != source:
            edge = parent[node]
            graph.cap[edge] -= bottleneck
            graph.cap[edge ^ 1] += bottleneck
            node = graph.tail(edge)
        sent += bottleneck
        augmentations += 1

    for edge, capacity in enumerate(graph.cap):
        if capacity > 0:
            reduced = graph.cost[edge] + potential[graph.tail(edge)] - potential[graph.head[edge]]
            if reduced < 0:
                raise NetworkError(f"Optimality check failed on residual arc {edge} (reduced cost {reduced}).")

    # original arc i sits at residual position 2 * i, its flow on the reverse
    flow = tuple(graph.cap[2 * i + 1] for i in range(len(net.arcs)))
    total_cost = sum(f * arc.cost for f, arc in zip(flow, net.arcs))
    LOGGER.debug(f"Routed {required} units in {augmentations} augmentations, cost {total_cost}")
    return FlowSolution(flow=flow, total_cost=total_cost, feasible=True)


def integerize(d, scale: int = DEFAULT_SCALE) -> np.ndarray:
    """Round ``d * scale`` to integers.

    :raises NetworkError: for negative or non-finite entries, or when a
        scaled entry exceeds the solver's integer range
    """
    d = np.asarray(d, dtype=float)
    if scale <= 0:
        raise NetworkError(f"Cost scale must be positive, got {scale}.")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise NetworkError("Distances must be finite and non-negative to integerize.")
    scaled = np.rint(d * scale)
    if scaled.size and scaled.max() > MAX_COST:
        raise NetworkError(f"Scaled distances exceed 2**62; use a cost scale smaller than {scale}.")
    return scaled.astype(np.int64)
