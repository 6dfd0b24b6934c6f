"""Structure of finite Markov chains: recurrent classes, periods, distribution tails.

The authoritative period computation is graph-theoretic and exact (integer
arithmetic on the support graph); counting modulus-1 eigenvalues with the
in-repo QR solver is a floating-point cross-check of the same quantity.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd, lcm

import numpy as np

from .eig import MAX_SIZE, EigenSolveError, eigenvalues

# Transition entries at or below this threshold are treated as absent edges.
EDGE_EPS = 1e-12
ROW_SUM_ATOL = 1e-12


class NoPeriodError(ValueError):
    """detect_empirical_period found no repeating shift within the tail."""


@dataclass(frozen=True)
class CanonicalDecomposition:
    """Recurrent classes (closed irreducible sets), transient states, and a
    state reordering that realises the block form (recurrent blocks first)."""

    recurrent_classes: tuple[tuple[int, ...], ...]
    transient_states: tuple[int, ...]
    permutation: tuple[int, ...]


@dataclass(frozen=True)
class PeriodReport:
    class_periods: tuple[int, ...]
    global_period: int
    eigen_counts: tuple[int, ...] | None = None
    empirical_period: int | None = None


def _check_chain(chain: np.ndarray) -> np.ndarray:
    chain = np.asarray(chain, dtype=np.float64)
    if chain.ndim != 2 or chain.shape[0] != chain.shape[1]:
        raise ValueError(f"chain must be square, got shape {chain.shape}")
    if np.any(chain < -EDGE_EPS):
        raise ValueError("chain has negative entries")
    dev = float(np.abs(chain.sum(axis=1) - 1.0).max())
    if dev > ROW_SUM_ATOL:
        raise ValueError(f"chain rows must sum to 1 (max deviation {dev:.3g})")
    return chain


def _support(chain: np.ndarray) -> list[list[int]]:
    n = chain.shape[0]
    return [[j for j in range(n) if chain[i, j] > EDGE_EPS] for i in range(n)]


def _tarjan_scc(adj: list[list[int]]) -> list[list[int]]:
    """Strongly connected components, iterative Tarjan, in discovery order."""
    n = len(adj)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    components: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, edge_i = work[-1]
            if edge_i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while edge_i < len(adj[v]):
                w = adj[v][edge_i]
                edge_i += 1
                if index[w] == -1:
                    work[-1] = (v, edge_i)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                components.append(sorted(comp))
    return components


def decompose(chain: np.ndarray) -> CanonicalDecomposition:
    """Partition states into closed irreducible recurrent classes and transients."""
    chain = _check_chain(chain)
    adj = _support(chain)
    comps = _tarjan_scc(adj)
    members = set()
    recurrent = []
    transient = []
    for comp in comps:
        comp_set = set(comp)
        closed = all(w in comp_set for v in comp for w in adj[v])
        if closed:
            recurrent.append(tuple(comp))
        else:
            transient.extend(comp)
    recurrent.sort(key=lambda c: c[0])
    transient = tuple(sorted(transient))
    for c in recurrent:
        members.update(c)
    members.update(transient)
    assert members == set(range(chain.shape[0]))
    perm = tuple(s for c in recurrent for s in c) + transient
    return CanonicalDecomposition(
        recurrent_classes=tuple(recurrent),
        transient_states=transient,
        permutation=perm,
    )


def class_period(chain: np.ndarray, states) -> int:
    """Period of a closed irreducible class: gcd of all cycle lengths through
    an anchor state, computed exactly from BFS level differences."""
    chain = _check_chain(chain)
    cls = sorted(int(s) for s in states)
    cls_set = set(cls)
    adj = _support(chain)
    for v in cls:
        for w in adj[v]:
            if w not in cls_set:
                raise ValueError(f"class is not closed: edge {v} -> {w} leaves it")
    anchor = cls[0]
    level = {anchor: 0}
    frontier = [anchor]
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj[v]:
                if w not in level:
                    level[w] = level[v] + 1
                    nxt.append(w)
        frontier = nxt
    if set(level) != cls_set:
        raise ValueError("class is not irreducible: anchor does not reach every member")
    period = 0
    for v in cls:
        for w in adj[v]:
            period = gcd(period, level[v] + 1 - level[w])
    return abs(period) if period else 1


def modulus_one_eigencount(block: np.ndarray, tol: float = 1e-8) -> int:
    """Number of eigenvalues with modulus at least 1 - tol, via the in-repo QR solver.

    Raises EigenSolveError on non-convergence; callers may fall back to
    class_period, which computes the same number exactly for irreducible blocks.
    """
    block = _check_chain(block)
    if block.shape[0] > MAX_SIZE:
        raise ValueError(f"block size {block.shape[0]} exceeds eigensolver cap {MAX_SIZE}")
    eigs = eigenvalues(block)
    return int(np.sum(np.abs(eigs) >= 1.0 - tol))


def asymptotic_period(chain: np.ndarray, decomposition: CanonicalDecomposition) -> PeriodReport:
    """Per-class periods and their lcm, the asymptotic period of the
    distribution sequence for any initial distribution."""
    chain = _check_chain(chain)
    periods = tuple(class_period(chain, cls) for cls in decomposition.recurrent_classes)
    if not periods:
        raise ValueError("decomposition has no recurrent classes")
    counts: tuple[int, ...] | None
    if all(len(cls) <= MAX_SIZE for cls in decomposition.recurrent_classes):
        try:
            counts = tuple(
                modulus_one_eigencount(chain[np.ix_(cls, cls)])
                for cls in decomposition.recurrent_classes
            )
        except EigenSolveError:
            counts = None
    else:
        counts = None
    return PeriodReport(
        class_periods=periods,
        global_period=lcm(*periods),
        eigen_counts=counts,
    )


def distribution_evolution(chain: np.ndarray, mu0: np.ndarray, n_steps: int) -> np.ndarray:
    """The distribution sequence mu0, P mu0, ..., P^n mu0 as rows of an array."""
    chain = _check_chain(chain)
    mu0 = np.asarray(mu0, dtype=np.float64)
    if mu0.shape != (chain.shape[0],):
        raise ValueError(f"mu0 shape {mu0.shape} does not match chain size {chain.shape[0]}")
    if np.any(mu0 < 0) or abs(mu0.sum() - 1.0) > ROW_SUM_ATOL:
        raise ValueError("mu0 must be a probability vector")
    out = np.empty((n_steps + 1, chain.shape[0]))
    out[0] = mu0
    step = chain.T
    for t in range(n_steps):
        out[t + 1] = step @ out[t]
    return out


def detect_empirical_period(tail: np.ndarray, tol: float) -> int:
    """Smallest shift p such that the tail repeats within tol in sup norm.

    Callers should pass a tail at least ten times longer than the period they
    expect so a spurious short match cannot hide a longer true period.
    """
    tail = np.asarray(tail, dtype=np.float64)
    if tail.ndim != 2 or tail.shape[0] < 2:
        raise ValueError("tail must contain at least two distribution vectors")
    n = tail.shape[0]
    for p in range(1, n // 2 + 1):
        if np.abs(tail[p:] - tail[:-p]).max() <= tol:
            return p
    raise NoPeriodError(f"no period up to {n // 2} detected at tol {tol}")
