"""Augmented-state dynamic programming for path functionals that are not
cylinder functionals of the increments alone (running integrals, quadratic
variation, adapted integrands).

States are integer row vectors; each builder below chooses coordinates that
make its functional an exact function of the state (net step counts per
volatility, per-volatility step totals for the quadratic variation, scaled
integer units for running integrals).  The forward pass enumerates reachable
states level by level with deduplication; the backward pass takes, at every
state, the maximum over volatility choices of the branch average plus an
optional per-step reward, resolving ties toward the smallest volatility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .glattice import Lattice

__all__ = [
    "WalkSpec",
    "WalkResult",
    "run_walk",
    "coord_walk",
    "qv_coord_walk",
    "weighted_coord_walk",
    "adapted_abs_walk",
    "reward_expect",
]


@dataclass
class WalkSpec:
    """A backward-induction problem over integer augmented states.

    transition(level, states, sigma_index, sign) -> child states (int64).
    terminal(states) -> values at the final level.
    reward(level, states, sigma_sq) -> per-state value added inside the
    per-step maximum (independent of the branch sign).
    decode(states) -> any per-state quantity (used by callers to interpret
    captured levels); optional.
    """

    lattice: Lattice
    init_state: np.ndarray
    transition: Callable
    terminal: Callable
    reward: Callable | None = None
    decode: Callable | None = None


@dataclass
class WalkResult:
    value: float
    stops: dict  # level -> (states (N, d) int64, values (N,))


def _pack(states: np.ndarray):
    """Mixed-radix pack of int64 rows into single int64 keys (for dedup)."""
    lo = states.min(axis=0)
    hi = states.max(axis=0)
    span = (hi - lo + 1).astype(np.int64)
    if np.prod(span.astype(float)) >= 2**62:
        raise RuntimeError("state coordinates out of packable range")
    keys = np.zeros(states.shape[0], dtype=np.int64)
    for c in range(states.shape[1]):
        keys = keys * span[c] + (states[:, c] - lo[c])
    return keys


def run_walk(spec: WalkSpec, stop_levels=(), max_states: int = 5_000_000) -> WalkResult:
    """Forward state enumeration then backward maximization.

    ``stop_levels`` capture (states, values) where values[i] is the
    conditional upper expectation of the terminal value plus accumulated
    rewards from that level on, given state i.
    """
    lat = spec.lattice
    n = lat.n_steps
    grid = lat.sigma_grid
    stop_levels = set(int(l) for l in stop_levels)

    states = np.asarray(spec.init_state, dtype=np.int64).reshape(1, -1)
    level_states = [states]
    # child index maps: maps[k][(i_sigma, sign)] = indices into states at k+1
    maps = []
    for k in range(n):
        children = []
        for i in range(len(grid)):
            for sign in (1, -1):
                children.append(spec.transition(k, states, i, sign))
        stacked = np.concatenate(children, axis=0)
        keys = _pack(stacked)
        uniq_keys, inverse = np.unique(keys, return_inverse=True)
        if uniq_keys.size > max_states:
            raise RuntimeError(
                f"state space too large at level {k + 1} "
                f"({uniq_keys.size} states); reduce n_steps"
            )
        # representative rows for each unique key
        first = np.full(uniq_keys.size, -1, dtype=np.int64)
        # reversed so that earlier occurrences win
        first[inverse[::-1]] = np.arange(stacked.shape[0] - 1, -1, -1)
        next_states = stacked[first]
        m = states.shape[0]
        level_maps = {}
        pos = 0
        for i in range(len(grid)):
            for sign in (1, -1):
                level_maps[(i, sign)] = inverse[pos : pos + m].astype(np.int64)
                pos += m
        maps.append(level_maps)
        level_states.append(next_states)
        states = next_states

    values = np.asarray(spec.terminal(level_states[n]), dtype=float)
    stops = {}
    if n in stop_levels:
        stops[n] = (level_states[n], values.copy())
    for k in range(n - 1, -1, -1):
        st = level_states[k]
        best = None
        for i in range(len(grid)):
            up = values[maps[k][(i, 1)]]
            dn = values[maps[k][(i, -1)]]
            cand = 0.5 * (up + dn)
            if spec.reward is not None:
                cand = cand + spec.reward(k, st, grid[i])
            if best is None:
                best = cand
            else:
                mask = cand > best
                best[mask] = cand[mask]
        values = best
        if k in stop_levels:
            stops[k] = (st, values.copy())
    return WalkResult(value=float(values[0]), stops=stops)


# --- state builders ----------------------------------------------------------


def coord_walk(lat: Lattice, active=None) -> WalkSpec:
    """State = net counts per volatility, accumulated on active levels only.

    decode gives the accumulated position sum(c_j * sigma_j * sqrt(dt)); with
    ``active`` a 0/1 per-level mask, that position is the integral of the
    indicator step process against the path.
    """
    r = lat.n_sigma
    sv = np.asarray(lat.sigma_values)
    sqdt = math.sqrt(lat.dt)
    if active is None:
        active = np.ones(lat.n_steps, dtype=bool)
    active = np.asarray(active, dtype=bool)

    def transition(level, states, i, sign):
        if not active[level]:
            return states
        out = states.copy()
        out[:, i] += sign
        return out

    def decode(states):
        return states @ (sv * sqdt)

    return WalkSpec(
        lattice=lat,
        init_state=np.zeros(r, dtype=np.int64),
        transition=transition,
        terminal=lambda s: decode(s),
        decode=decode,
    )


def qv_coord_walk(lat: Lattice) -> WalkSpec:
    """State = (net counts per volatility, step totals for all but the last).

    decode returns (position B, quadratic variation): the step totals m_j
    give qv = dt * sum_j m_j * sigma_j^2 exactly, with the last total
    recovered from the level.
    """
    r = lat.n_sigma
    sv = np.asarray(lat.sigma_values)
    s2 = np.asarray(lat.sigma_grid)
    sqdt = math.sqrt(lat.dt)
    dt = lat.dt
    d = 2 * r - 1

    def transition(level, states, i, sign):
        out = states.copy()
        out[:, i] += sign
        if i < r - 1:
            out[:, r + i] += 1
        return out

    def decode_with_level(states, level):
        pos = states[:, :r] @ (sv * sqdt)
        if r == 1:
            qv = np.full(states.shape[0], level * s2[0] * dt)
        else:
            m = states[:, r:]
            m_last = level - m.sum(axis=1)
            qv = dt * (m @ s2[:-1] + m_last * s2[-1])
        return pos, qv

    spec = WalkSpec(
        lattice=lat,
        init_state=np.zeros(d, dtype=np.int64),
        transition=transition,
        terminal=lambda s: decode_with_level(s, lat.n_steps)[0],
        decode=None,
    )
    spec.decode = decode_with_level
    return spec


def weighted_coord_walk(lat: Lattice, level_values) -> WalkSpec:
    """State = net counts per (distinct integrand value, volatility).

    For a deterministic step integrand taking few distinct values, the
    running integral sum_k f_k * dB_k is an exact function of these counts.
    decode returns the running integral.
    """
    vals = np.asarray(level_values, dtype=float)
    if vals.shape != (lat.n_steps,):
        raise ValueError("need one integrand value per step")
    distinct = sorted(set(float(v) for v in vals))
    classes = np.array([distinct.index(float(v)) for v in vals])
    r = lat.n_sigma
    nc = len(distinct)
    sv = np.asarray(lat.sigma_values)
    sqdt = math.sqrt(lat.dt)
    weights = np.array(
        [distinct[c] * sv[j] * sqdt for c in range(nc) for j in range(r)]
    )

    def transition(level, states, i, sign):
        out = states.copy()
        out[:, classes[level] * r + i] += sign
        return out

    def decode(states):
        return states @ weights

    return WalkSpec(
        lattice=lat,
        init_state=np.zeros(nc * r, dtype=np.int64),
        transition=transition,
        terminal=lambda s: decode(s),
        decode=decode,
    )


def adapted_abs_walk(lat: Lattice) -> WalkSpec:
    """State for the running integral of (|B| + 1) against the path.

    The integral splits as sum_k |B_k| dB_k + B, so the state is the net
    counts plus one scaled integer u with sum_k |B_k| dB_k = u * dt / scale.
    Exact whenever all pairwise products of grid volatilities are integer
    multiples of 1/scale (true for the default band endpoints); otherwise the
    scaled units quantize the integral at resolution dt / scale.
    """
    r = lat.n_sigma
    sv = np.asarray(lat.sigma_values)
    sqdt = math.sqrt(lat.dt)
    dt = lat.dt
    # choose the scale: exact denominator if products are rational dyadics
    scale = 4.0
    prods = np.multiply.outer(sv, sv).ravel()
    if not np.allclose(prods * scale, np.round(prods * scale), atol=1e-12):
        scale = float(2**20)

    def transition(level, states, i, sign):
        out = states.copy()
        pos_units = states[:, :r] @ sv  # position / sqrt(dt)
        du = np.rint(np.abs(pos_units) * sv[i] * scale).astype(np.int64)
        out[:, r] += sign * du
        out[:, i] += sign
        return out

    def decode(states):
        pos = states[:, :r] @ (sv * sqdt)
        integral = states[:, r] * (dt / scale) + pos
        return pos, integral

    spec = WalkSpec(
        lattice=lat,
        init_state=np.zeros(r + 1, dtype=np.int64),
        transition=transition,
        terminal=lambda s: decode(s)[1],
        decode=decode,
    )
    return spec


def reward_expect(lat: Lattice, reward, state_spec: WalkSpec | None = None,
                  stop_levels=()) -> WalkResult:
    """Upper expectation of an additive path functional sum_k r(k, state, sigma^2).

    With no state dependence this is a scalar recursion; otherwise the reward
    rides on the supplied walk's states.
    """
    if state_spec is None:
        base = coord_walk(lat)
    else:
        base = state_spec
    spec = WalkSpec(
        lattice=lat,
        init_state=base.init_state,
        transition=base.transition,
        terminal=lambda s: np.zeros(s.shape[0]),
        reward=reward,
        decode=base.decode,
    )
    return run_walk(spec, stop_levels=stop_levels)
