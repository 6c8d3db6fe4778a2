"""Inter-chiplet wirelength by min-cost flow over a microbump grid.

Bump sites sit on a square lattice of pitch ``p`` over the interposer and
are joined to their 4-neighbours by edges of length ``p`` carrying at most
``capacity`` wires. Every chiplet gets a virtual terminal linked to each
site under its footprint; that link's length is the Manhattan distance from
the die center to the site, so an uncongested route between two dies costs
exactly their center-to-center Manhattan distance per wire.

Nets are routed one at a time (most wires first, then by name) as
single-commodity min-cost flows using successive shortest paths with
Johnson potentials; each net consumes capacity left for the next.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import ArchitectureSpec, Net, Placement

GRID, ATTACH = 0, 1
_EPS = 1e-9


@dataclass
class RoutingGraph:
    pitch: float
    capacity: int
    site_xy: np.ndarray  # (n_sites, 2) mm
    eu: np.ndarray  # edge endpoints; for attachment edges eu is the terminal
    ev: np.ndarray
    length: np.ndarray  # mm
    cap: np.ndarray  # wires
    kind: np.ndarray  # GRID or ATTACH
    terminals: dict[str, int]
    terminal_xy: dict[str, tuple[float, float]]
    adjacency: list[list[int]] = field(repr=False, default_factory=list)

    @property
    def n_sites(self) -> int:
        return len(self.site_xy)

    @property
    def n_nodes(self) -> int:
        return self.n_sites + len(self.terminals)

    @property
    def n_edges(self) -> int:
        return len(self.eu)

    def node_xy(self, node: int) -> tuple[float, float]:
        if node < self.n_sites:
            x, y = self.site_xy[node]
            return float(x), float(y)
        for name, t in self.terminals.items():
            if t == node:
                return self.terminal_xy[name]
        raise KeyError(node)

    def attachments(self, name: str) -> np.ndarray:
        t = self.terminals[name]
        return np.flatnonzero((self.kind == ATTACH) & (self.eu == t))


def _site_lattice(W, H, pitch):
    nsx = int(math.floor(W / pitch + _EPS)) + 1
    nsy = int(math.floor(H / pitch + _EPS)) + 1
    return nsx, nsy


def build_routing_graph(
    spec: ArchitectureSpec,
    p: Placement,
    pitch: float = 1.0,
    capacity: int = 128,
    keepouts: Iterable[tuple[float, float, float, float]] = (),
) -> RoutingGraph:
    """Bump-site grid with one attached terminal per chiplet.

    ``keepouts`` are (x0, y0, x1, y1) rectangles whose sites are removed.
    """
    if not pitch > 0:
        raise ValueError("pitch must be > 0")
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    W, H = spec.package.interposer_width, spec.package.interposer_height
    nsx, nsy = _site_lattice(W, H, pitch)
    xs = np.arange(nsx) * pitch
    ys = np.arange(nsy) * pitch
    keep = np.ones((nsy, nsx), dtype=bool)
    for x0, y0, x1, y1 in keepouts:
        keep &= ~(((ys >= y0 - _EPS) & (ys <= y1 + _EPS))[:, None] & ((xs >= x0 - _EPS) & (xs <= x1 + _EPS))[None, :])
    node_of = np.full((nsy, nsx), -1, dtype=int)
    node_of[keep] = np.arange(keep.sum())
    jj, ii = np.nonzero(keep)
    site_xy = np.column_stack([xs[ii], ys[jj]])

    eu, ev, length, cap, kind = [], [], [], [], []
    for a, b in ((node_of[:, :-1], node_of[:, 1:]), (node_of[:-1, :], node_of[1:, :])):
        ok = (a >= 0) & (b >= 0)
        eu.extend(a[ok].tolist())
        ev.extend(b[ok].tolist())
    n_grid = len(eu)
    length.extend([pitch] * n_grid)
    cap.extend([capacity] * n_grid)
    kind.extend([GRID] * n_grid)

    terminals, terminal_xy = {}, {}
    n_sites = len(site_xy)
    for k, c in enumerate(spec.chiplets):
        x0, y0, x1, y1 = p.rect(c)
        pose = p[c.name]
        under = np.flatnonzero(
            (site_xy[:, 0] >= x0 - _EPS) & (site_xy[:, 0] <= x1 + _EPS)
            & (site_xy[:, 1] >= y0 - _EPS) & (site_xy[:, 1] <= y1 + _EPS)
        )
        if under.size == 0:
            raise ValueError(f"chiplet {c.name} covers no bump site at pitch {pitch:g} mm")
        t = n_sites + k
        terminals[c.name] = t
        terminal_xy[c.name] = (pose.x, pose.y)
        d = np.abs(site_xy[under, 0] - pose.x) + np.abs(site_xy[under, 1] - pose.y)
        eu.extend([t] * under.size)
        ev.extend(under.tolist())
        length.extend(d.tolist())
        cap.extend([capacity] * under.size)
        kind.extend([ATTACH] * under.size)

    g = RoutingGraph(
        pitch=pitch, capacity=capacity, site_xy=site_xy,
        eu=np.asarray(eu, dtype=int), ev=np.asarray(ev, dtype=int),
        length=np.asarray(length, dtype=float), cap=np.asarray(cap, dtype=int),
        kind=np.asarray(kind, dtype=int), terminals=terminals, terminal_xy=terminal_xy,
    )
    g.adjacency = _adjacency(g)
    if not sites_connected(g):
        raise ValueError("bump-site graph is disconnected")
    return g


def _adjacency(g: RoutingGraph) -> list[list[int]]:
    adj = [[] for _ in range(g.n_nodes)]
    for e, (u, v) in enumerate(zip(g.eu.tolist(), g.ev.tolist())):
        adj[u].append(e)
        adj[v].append(e)
    return adj


def sites_connected(g: RoutingGraph) -> bool:
    """Breadth-first flood fill over grid edges."""
    if g.n_sites == 0:
        return False
    seen = np.zeros(g.n_sites, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for e in g.adjacency[u]:
            if g.kind[e] != GRID:
                continue
            v = g.ev[e] if g.eu[e] == u else g.eu[e]
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return bool(seen.all())


@dataclass
class NetRoute:
    net: Net
    routed: int  # wires delivered
    length: float  # mm, sum over edges of |flow| * length
    flows: dict[int, int]  # edge id -> signed units (+ means eu -> ev)


@dataclass
class RouteResult:
    routes: list[NetRoute]
    total_wirelength: float
    feasible: bool

    def per_net(self) -> dict[str, float]:
        return {r.net.name: r.length for r in self.routes}


def _route_one(g: RoutingGraph, remaining: np.ndarray, net: Net):
    """Send net.wires units from src to dst terminal; returns (routed, fwd, bwd)."""
    s, t = g.terminals[net.src], g.terminals[net.dst]
    eu, ev, L, kind = g.eu, g.ev, g.length, g.kind
    # direction rules for attachment edges: out of s, into t, nothing else
    allow_fwd = kind == GRID
    allow_bwd = kind == GRID
    allow_fwd = allow_fwd | ((kind == ATTACH) & (eu == s))
    allow_bwd = allow_bwd | ((kind == ATTACH) & (eu == t))
    active = allow_fwd | allow_bwd
    fwd = np.zeros(g.n_edges, dtype=np.int64)
    bwd = np.zeros(g.n_edges, dtype=np.int64)
    cap = remaining.astype(np.int64)
    pi = np.zeros(g.n_nodes)
    adj = g.adjacency
    eu_l, ev_l, L_l = eu.tolist(), ev.tolist(), L.tolist()
    act_l, af_l, ab_l = active.tolist(), allow_fwd.tolist(), allow_bwd.tolist()
    left = net.wires
    while left > 0:
        dist = [math.inf] * g.n_nodes
        prev = [None] * g.n_nodes  # (edge, moves along eu->ev?)
        done = [False] * g.n_nodes
        dist[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            d, x = heapq.heappop(heap)
            if done[x]:
                continue
            done[x] = True
            if x == t:
                break
            px = pi[x]
            for e in adj[x]:
                if not act_l[e]:
                    continue
                if eu_l[e] == x:
                    y = ev_l[e]
                    if bwd[e] > 0:
                        c = -L_l[e]
                    elif af_l[e] and fwd[e] < cap[e]:
                        c = L_l[e]
                    else:
                        continue
                    forward = True
                else:
                    y = eu_l[e]
                    if fwd[e] > 0:
                        c = -L_l[e]
                    elif ab_l[e] and bwd[e] < cap[e]:
                        c = L_l[e]
                    else:
                        continue
                    forward = False
                if done[y]:
                    continue
                rc = c + px - pi[y]
                if rc < 0:
                    rc = 0.0
                nd = d + rc
                if nd < dist[y]:
                    dist[y] = nd
                    prev[y] = (e, forward)
                    heapq.heappush(heap, (nd, y))
        if not done[t]:
            break
        dt = dist[t]
        for x in range(g.n_nodes):
            pi[x] += dist[x] if (done[x] and dist[x] < dt) else dt
        # bottleneck along the path
        path = []
        x = t
        push = left
        while x != s:
            e, forward = prev[x]
            path.append((e, forward))
            if forward:
                room = bwd[e] if bwd[e] > 0 else cap[e] - fwd[e]
                x = eu_l[e]
            else:
                room = fwd[e] if fwd[e] > 0 else cap[e] - bwd[e]
                x = ev_l[e]
            push = min(push, int(room))
        for e, forward in path:
            if forward:
                if bwd[e] > 0:
                    bwd[e] -= push
                else:
                    fwd[e] += push
            else:
                if fwd[e] > 0:
                    fwd[e] -= push
                else:
                    bwd[e] += push
        left -= push
    return net.wires - left, fwd, bwd


def net_order(nets: Sequence[Net]) -> list[Net]:
    return sorted(nets, key=lambda n: (-n.wires, n.src, n.dst))


def route_nets(g: RoutingGraph, nets: Sequence[Net]) -> RouteResult:
    """Route every net; ``feasible`` is False if any net ran out of capacity."""
    remaining = g.cap.astype(np.int64).copy()
    routes = []
    feasible = True
    for net in net_order(nets):
        routed, fwd, bwd = _route_one(g, remaining, net)
        signed = fwd - bwd
        used = np.flatnonzero(signed)
        remaining -= np.abs(signed)
        length = float(np.abs(signed[used]) @ g.length[used]) if used.size else 0.0
        routes.append(NetRoute(net, int(routed), length, {int(e): int(signed[e]) for e in used}))
        if routed < net.wires:
            feasible = False
    total = float(sum(r.length for r in routes))
    return RouteResult(routes, total, feasible)


def hpwl_estimate(p: Placement, nets: Sequence[Net]) -> float:
    """Wire count times center-to-center Manhattan distance, summed over nets."""
    total = 0.0
    for n in nets:
        a, b = p[n.src], p[n.dst]
        total += n.wires * (abs(a.x - b.x) + abs(a.y - b.y))
    return total


def flow_violations(g: RoutingGraph, result: RouteResult) -> list[str]:
    """Recount conservation and capacity from the stored edge flows."""
    out = []
    usage = np.zeros(g.n_edges, dtype=np.int64)
    for r in result.routes:
        bal = np.zeros(g.n_nodes, dtype=np.int64)
        for e, f in r.flows.items():
            usage[e] += abs(f)
            bal[g.eu[e]] -= f
            bal[g.ev[e]] += f
        s, t = g.terminals[r.net.src], g.terminals[r.net.dst]
        if bal[s] != -r.routed or bal[t] != r.routed:
            out.append(f"{r.net.name}: terminal imbalance {bal[s]}, {bal[t]} for {r.routed} wires")
        bal[s] = bal[t] = 0
        if bal.any():
            out.append(f"{r.net.name}: nonzero balance at {np.count_nonzero(bal)} intermediate node(s)")
    over = np.flatnonzero(usage > g.cap)
    if over.size:
        out.append(f"{over.size} edge(s) over capacity")
    return out


def route_segments(g: RoutingGraph, result: RouteResult) -> list[tuple]:
    """Rows (net, segment, x0, y0, x1, y1, wires) oriented along the flow."""
    rows = []
    for r in result.routes:
        for k, (e, f) in enumerate(sorted(r.flows.items())):
            a, b = int(g.eu[e]), int(g.ev[e])
            if f < 0:
                a, b = b, a
            (x0, y0), (x1, y1) = g.node_xy(a), g.node_xy(b)
            rows.append((r.net.name, k, x0, y0, x1, y1, abs(f)))
    return rows
