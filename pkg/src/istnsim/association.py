"""Target to radar-receiver association rules."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Association:
    """``receiver[i]`` serves target ``i``; ``fallback[i]`` marks a target whose
    satellite-pruned candidate set was empty."""
    receiver: np.ndarray
    fallback: np.ndarray
    candidates: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "receiver", np.asarray(self.receiver, dtype=int))
        object.__setattr__(self, "fallback", np.asarray(self.fallback, dtype=bool))


def associate_proposed(cell, alpha, delta_sat, delta_tar):
    """Satellite- and inter-target-aware association.

    ``cell`` supplies ``theta_r`` (N_tar, N_rad) and ``theta_sat`` (N_rad,);
    ``alpha`` is the (N_tar, N_rad) echo path gain.
    """
    theta_r = np.asarray(cell.theta_r)
    theta_sat = np.asarray(cell.theta_sat)
    alpha = np.asarray(alpha)
    n_tar, n_rad = alpha.shape
    pairs = {(i, n) for i in range(n_tar) for n in range(n_rad)
             if abs(theta_r[i, n] - theta_sat[n]) >= delta_sat}
    excluded = set()  # pairs removed by the co-angular rule
    # descending gain; ties broken by the lowest receiver then target index
    order = sorted(((i, n) for i in range(n_tar) for n in range(n_rad)),
                   key=lambda p: (-alpha[p], p[1], p[0]))
    receiver = -np.ones(n_tar, dtype=int)
    for i, n in order:
        if receiver[i] >= 0 or (i, n) not in pairs:
            continue
        receiver[i] = n
        pairs -= {(i, m) for m in range(n_rad) if m != n}
        for j in range(n_tar):
            if j != i and receiver[j] < 0 and abs(theta_r[i, n] - theta_r[j, n]) < delta_tar:
                pairs.discard((j, n))
                excluded.add((j, n))
        if np.all(receiver >= 0):
            break
    fallback = receiver < 0
    for i in np.flatnonzero(fallback):
        ok = [n for n in range(n_rad) if (i, n) not in excluded] or list(range(n_rad))
        receiver[i] = max(ok, key=lambda n: (alpha[i, n], -n))
    kept = frozenset((i, int(receiver[i])) for i in range(n_tar))
    return Association(receiver=receiver, fallback=fallback, candidates=kept)


def associate_baseline(rule, alpha, rng=None):
    """``nearest``: per-target best gain (receivers may repeat); ``greedy``:
    sequential best gain with one target per receiver; ``random``: uniform
    one-to-one map."""
    alpha = np.asarray(alpha)
    n_tar, n_rad = alpha.shape
    if rule == "nearest":
        rx = np.argmax(alpha, axis=1)
    elif rule == "greedy":
        if n_tar > n_rad:
            raise ValueError("greedy association needs N_tar <= N_rad")
        rx = -np.ones(n_tar, dtype=int)
        order = sorted(((i, n) for i in range(n_tar) for n in range(n_rad)),
                       key=lambda p: (-alpha[p], p[1], p[0]))
        used = set()
        for i, n in order:
            if rx[i] < 0 and n not in used:
                rx[i] = n
                used.add(n)
    elif rule == "random":
        if rng is None:
            raise ValueError("random association needs an rng")
        if n_tar <= n_rad:
            rx = rng.permutation(n_rad)[:n_tar]
        else:
            rx = rng.integers(0, n_rad, n_tar)
    else:
        raise ValueError(f"unknown association rule {rule!r}")
    return Association(receiver=rx, fallback=np.zeros(n_tar, dtype=bool))
