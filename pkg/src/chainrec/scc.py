"""Strongly connected components and condensation of cell digraphs.

Tarjan's algorithm is the production path; it runs on an explicit stack
because grids of ~10^6 cells would blow the recursion limit.  Kosaraju's
two-pass algorithm is kept as an independent implementation for
cross-checks, and ``cycle_nodes_by_peeling`` gives a third route to the
set of nodes lying on cycles.
"""

from __future__ import annotations

__all__ = ["tarjan_scc", "kosaraju_scc", "condensation", "cycle_nodes"]


def tarjan_scc(n: int, adj: list[list[int]]) -> list[int]:
    """Component id per node (iterative Tarjan).

    Ids are renumbered so that they are a reverse topological order of
    the condensation: every edge u -> v with comp[u] != comp[v] has
    comp[u] > comp[v] before renumbering; we flip at the end so that
    edges go from lower to higher id (a topological order).
    """
    UNVISITED = -1
    index = [UNVISITED] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comp = [UNVISITED] * n
    counter = 0
    ncomp = 0

    for root in range(n):
        if index[root] != UNVISITED:
            continue
        work = [(root, 0)]
        while work:
            node, ei = work.pop()
            if ei == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack[node] = True
            recurse = False
            edges = adj[node]
            while ei < len(edges):
                succ = edges[ei]
                ei += 1
                if index[succ] == UNVISITED:
                    work.append((node, ei))
                    work.append((succ, 0))
                    recurse = True
                    break
                if on_stack[succ]:
                    if index[succ] < low[node]:
                        low[node] = index[succ]
            if recurse:
                continue
            if low[node] == index[node]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = ncomp
                    if w == node:
                        break
                ncomp += 1
            if work:
                parent = work[-1][0]
                if low[node] < low[parent]:
                    low[parent] = low[node]
    # flip to topological numbering (edges: low id -> high id)
    return [ncomp - 1 - c for c in comp]


def kosaraju_scc(n: int, adj: list[list[int]]) -> list[int]:
    """Component id per node via Kosaraju (independent of Tarjan)."""
    radj: list[list[int]] = [[] for _ in range(n)]
    for u in range(n):
        for v in adj[u]:
            radj[v].append(u)
    visited = [False] * n
    order: list[int] = []
    for root in range(n):
        if visited[root]:
            continue
        work = [(root, 0)]
        visited[root] = True
        while work:
            node, ei = work.pop()
            edges = adj[node]
            advanced = False
            while ei < len(edges):
                succ = edges[ei]
                ei += 1
                if not visited[succ]:
                    visited[succ] = True
                    work.append((node, ei))
                    work.append((succ, 0))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
    comp = [-1] * n
    ncomp = 0
    for root in reversed(order):
        if comp[root] != -1:
            continue
        comp[root] = ncomp
        work = [root]
        while work:
            u = work.pop()
            for v in radj[u]:
                if comp[v] == -1:
                    comp[v] = ncomp
                    work.append(v)
        ncomp += 1
    return comp


def condensation(n: int, adj: list[list[int]], comp: list[int]
                 ) -> tuple[int, list[set[int]]]:
    """Number of components and deduplicated DAG adjacency (no self loops)."""
    ncomp = max(comp) + 1 if comp else 0
    dag: list[set[int]] = [set() for _ in range(ncomp)]
    for u in range(n):
        cu = comp[u]
        for v in adj[u]:
            cv = comp[v]
            if cu != cv:
                dag[cu].add(cv)
    return ncomp, dag


def cycle_nodes(n: int, adj: list[list[int]], comp: list[int]) -> set[int]:
    """Nodes lying on a directed cycle: SCC size > 1 or a self loop."""
    size = [0] * (max(comp) + 1 if comp else 0)
    for c in comp:
        size[c] += 1
    out = set()
    for u in range(n):
        if size[comp[u]] > 1 or u in adj[u]:
            out.add(u)
    return out
