"""Exact continuous-time Markov chain for small all-exponential instances.

State: the queue length of every flow (truncated at ``cap``; arrivals to a
full queue are lost) and the signal phase, ``green(g)`` or ``red(g)``, where
``red(g)`` is the all-red period after group ``g``.  In stay-empty mode a
flow of the green group with an empty queue has necessarily cleared during
this green, so the cleared flag is implied by the queue length and is not
stored separately.

Exhaustive termination is instantaneous, so it is folded into the last
departure.  A green whose group is empty at its start is skipped at once.
A zero all-red time is skipped too, and when every all-red time is zero an
empty system waits in an ``idle`` phase until the next arrival.

Mean delays follow from PASTA: an arriving vehicle samples the stationary
state and is then tracked through a chain in which it is absorbed at the end
of its own headway.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as splinalg

from .errors import (InvalidInputError, ReducibleChainError,
                     StateSpaceTooLargeError)
from .model import IntersectionSpec
from .sim import MODES, STAY_EMPTY

IDLE = -1
DIRECT_SOLVE_LIMIT = 200_000


@dataclass(frozen=True)
class CtmcSpec:
    spec: IntersectionSpec
    rho: float
    cap: int = 6
    mode: str = STAY_EMPTY

    def __post_init__(self):
        if self.cap < 1:
            raise InvalidInputError("cap must be at least 1")
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if not self.rho > 0:
            raise InvalidInputError("rho must be positive")
        for grp in self.spec.groups:
            r = grp.all_red
            if not (r.scv == 1 or (r.scv == 0 and r.mean == 0)):
                raise InvalidInputError("all-red times must be exponential (or exactly zero)")
            for f in grp.flows:
                if f.headway.scv != 1 or f.interarrival_scv != 1:
                    raise InvalidInputError(f"flow {f.id}: headways and interarrivals must be exponential")


@dataclass
class Generator:
    Q: sparse.csr_matrix
    states: list  # (queues tuple, phase) with phase = (kind, g), kind 'G' | 'R' | 'I'
    index: dict
    ctmc: CtmcSpec


class _Layout:
    """Flow bookkeeping shared by the full and the tagged chain."""

    def __init__(self, ctmc: CtmcSpec):
        spec = ctmc.spec
        self.ctmc = ctmc
        self.flows = [f for grp in spec.groups for f in grp.flows]
        self.group_of = [g for g, grp in enumerate(spec.groups) for _ in grp.flows]
        self.members = []
        k = 0
        for grp in spec.groups:
            self.members.append(list(range(k, k + len(grp.flows))))
            k += len(grp.flows)
        self.M = len(spec.groups)
        self.lam = [ctmc.rho * f.rate for f in self.flows]
        self.mu = [1.0 / f.headway.mean for f in self.flows]
        self.red_rate = [1.0 / grp.all_red.mean if grp.all_red.mean > 0 else None for grp in spec.groups]
        self.stay_empty = ctmc.mode == STAY_EMPTY

    def pos(self, flow) -> int:
        g, j = self.ctmc.spec.locate(flow)
        return self.members[g][j]

    def enter_green(self, g, n, hops=0):
        if any(n[i] for i in self.members[g]):
            return n, ("G", g)
        return self.enter_red(g, n, hops)

    def enter_red(self, g, n, hops=0):
        if self.red_rate[g] is not None:
            return n, ("R", g)
        if hops >= self.M:
            return n, ("I", IDLE)
        return self.enter_green((g + 1) % self.M, n, hops + 1)

    def valid(self, n, phase) -> bool:
        kind, g = phase
        if kind == "G":
            return any(n[i] for i in self.members[g])
        if kind == "R":
            return self.red_rate[g] is not None
        return not any(n)

    def phases(self):
        out = [("G", g) for g in range(self.M)]
        out += [("R", g) for g in range(self.M) if self.red_rate[g] is not None]
        if all(r is None for r in self.red_rate):
            out.append(("I", IDLE))
        return out

    def transitions(self, n, phase, frozen=None):
        """Yield ``(rate, target)`` pairs; target None marks absorption of a
        tagged vehicle in flow ``frozen`` (whose arrivals are ignored)."""
        kind, g = phase
        cap = self.ctmc.cap
        for i, lam in enumerate(self.lam):
            if i == frozen or lam == 0:
                continue
            if kind == "G" and self.group_of[i] == g and n[i] == 0 and self.stay_empty:
                continue  # passes straight through
            if n[i] >= cap:
                continue  # lost
            m = list(n)
            m[i] += 1
            m = tuple(m)
            if kind == "I":
                yield lam, self.enter_green(self.group_of[i], m)
            else:
                yield lam, (m, phase)
        if kind == "G":
            for i in self.members[g]:
                if n[i] == 0:
                    continue
                if i == frozen and n[i] == 1:
                    yield self.mu[i], None
                    continue
                m = list(n)
                m[i] -= 1
                m = tuple(m)
                if any(m[k] for k in self.members[g]):
                    yield self.mu[i], (m, phase)
                else:
                    yield self.mu[i], self.enter_red(g, m)
        elif kind == "R":
            yield self.red_rate[g], self.enter_green((g + 1) % self.M, n)


def _assemble(states, index, layout, frozen=None):
    rows, cols, vals = [], [], []
    absorb = np.zeros(len(states))
    for s, (n, phase) in enumerate(states):
        out = 0.0
        for rate, target in layout.transitions(n, phase, frozen):
            out += rate
            if target is None:
                absorb[s] += rate
                continue
            t = index[target]
            if t == s:
                out -= rate
                continue
            rows.append(s)
            cols.append(t)
            vals.append(rate)
        rows.append(s)
        cols.append(s)
        vals.append(-out)
    Q = sparse.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return Q, absorb


def _enumerate(layout, max_states, own=None):
    cap = layout.ctmc.cap
    F = len(layout.flows)
    phases = layout.phases()
    estimate = (cap + 1) ** F * len(phases)
    if estimate > max_states:
        raise StateSpaceTooLargeError(f"about {estimate} states exceed the limit of {max_states}")
    states = []
    for n in itertools.product(range(cap + 1), repeat=F):
        if own is not None and n[own] == 0:
            continue
        for phase in phases:
            if layout.valid(n, phase):
                states.append((n, phase))
    return states, {s: k for k, s in enumerate(states)}


def build_generator(ctmc: CtmcSpec, max_states: int = 200_000) -> Generator:
    layout = _Layout(ctmc)
    states, index = _enumerate(layout, max_states)
    Q, _ = _assemble(states, index, layout)
    return Generator(Q, states, index, ctmc)


def _solve(A, b):
    if A.shape[0] <= DIRECT_SOLVE_LIMIT:
        return splinalg.spsolve(A.tocsc(), b)
    x, info = splinalg.gmres(A, b, rtol=1e-10, restart=200, maxiter=10_000)
    if info != 0:
        raise ReducibleChainError("iterative solve did not converge")
    return x


def stationary(gen) -> np.ndarray:
    """Solve ``pi Q = 0`` with ``sum(pi) = 1``.  Accepts a :class:`Generator`
    or a bare square rate matrix."""
    Q = gen.Q if isinstance(gen, Generator) else sparse.csr_matrix(gen)
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)
    ncomp, _ = csgraph.connected_components(Q != 0, directed=True, connection="strong")
    if ncomp != 1:
        raise ReducibleChainError(f"generator has {ncomp} communicating classes")
    A = Q.T.tolil()
    A[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[n - 1] = 1.0
    pi = _solve(A.tocsr(), b)
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def mean_delay_exact(ctmc: CtmcSpec, flow, max_states: int = 200_000, pi=None, gen=None) -> float:
    """Mean delay of an arriving (non-lost) vehicle of ``flow``; pass-through
    vehicles count with delay 0."""
    layout = _Layout(ctmc)
    if gen is None:
        gen = build_generator(ctmc, max_states)
    if pi is None:
        pi = stationary(gen)
    own = layout.pos(flow)
    h = layout.group_of[own]

    tstates, tindex = _enumerate(layout, max_states, own=own)
    Qt, _ = _assemble(tstates, tindex, layout, frozen=own)
    T = _solve(-Qt, np.ones(len(tstates)))

    num = den = 0.0
    for p, (n, phase) in zip(pi, gen.states):
        if p == 0.0:
            continue
        kind, g = phase
        if kind == "G" and g == h and n[own] == 0 and layout.stay_empty:
            den += p
            continue
        if n[own] >= ctmc.cap:
            continue
        m = list(n)
        m[own] += 1
        m = tuple(m)
        start = layout.enter_green(h, m) if kind == "I" else (m, phase)
        num += p * T[tindex[start]]
        den += p
    return num / den


def mean_delays_exact(ctmc: CtmcSpec, max_states: int = 200_000) -> dict:
    """Mean delay of every flow, sharing one stationary solve."""
    gen = build_generator(ctmc, max_states)
    pi = stationary(gen)
    return {f.id: mean_delay_exact(ctmc, f.id, max_states, pi=pi, gen=gen) for f in ctmc.spec.flows}


def cap_mass(gen: Generator, pi) -> float:
    """Stationary probability that some queue sits at the cap."""
    cap = gen.ctmc.cap
    return float(sum(p for p, (n, _) in zip(pi, gen.states) if max(n) >= cap))


def residual(gen: Generator, pi) -> float:
    return float(np.max(np.abs(pi @ gen.Q)))
