"""Brute-force reference implementations used as independent oracles.

Everything here is deliberately literal: nested loops over whole
configuration spaces, hand-written Hamiltonians for the built-in models,
no caching, no incremental tricks.  The package's fast paths are tested
against these, never the other way around.
"""

import math
from itertools import combinations, product


def log_sum_exp(values):
    values = list(values)
    m = max(values)
    return m + math.log(sum(math.exp(v - m) for v in values))


def nn_pairs(sites):
    """Unordered nearest-neighbour (l1 distance 1) pairs within a site list."""
    have = set(sites)
    pairs = []
    for s in sites:
        for axis in range(len(s)):
            t = s[:axis] + (s[axis] + 1,) + s[axis + 1:]
            if t in have:
                pairs.append((s, t))
    return pairs


# ---------------------------------------------------------------------------
# hand-written Hamiltonians (free boundary unless frozen spins are passed)
# ---------------------------------------------------------------------------


def rfim_energy(J, h, sites, eta, frozen=None):
    """-J sum ss' over nn pairs, -h sum eta s over sites; frozen spins extend pairs."""
    frozen = dict(frozen or {})
    all_sites = list(sites) + list(frozen)
    pairs = [p for p in nn_pairs(all_sites) if p[0] in set(sites) or p[1] in set(sites)]

    def energy(sigma):
        full = dict(frozen)
        full.update(sigma)
        e = 0.0
        for x, y in pairs:
            e -= J * full[x] * full[y]
        for x in sites:
            e -= h * eta[x] * full[x]
        return e

    return energy


def random_bond_energy(sites, eta, frozen=None):
    """-J_{x,e} ss' with the coupling tuple stored at the lex-smaller endpoint."""
    frozen = dict(frozen or {})
    all_sites = list(sites) + list(frozen)
    pairs = [p for p in nn_pairs(all_sites) if p[0] in set(sites) or p[1] in set(sites)]

    def energy(sigma):
        full = dict(frozen)
        full.update(sigma)
        e = 0.0
        for x, y in pairs:
            axis = next(a for a in range(len(x)) if x[a] != y[a])
            coup = eta[x]
            j = coup[axis] if isinstance(coup, tuple) else coup
            e -= j * full[x] * full[y]
        return e

    return energy


def dilute_energy(J, sites, eta, frozen=None, frozen_eta=None):
    """-J eta eta' ss' on nn pairs between occupied sites."""
    frozen = dict(frozen or {})
    occ = dict(eta)
    occ.update(frozen_eta or {})
    all_sites = list(sites) + list(frozen)
    pairs = [p for p in nn_pairs(all_sites) if p[0] in set(sites) or p[1] in set(sites)]

    def energy(sigma):
        full = dict(frozen)
        full.update(sigma)
        e = 0.0
        for x, y in pairs:
            e -= J * occ[x] * occ[y] * full[x] * full[y]
        return e

    return energy


# ---------------------------------------------------------------------------
# exhaustive sums
# ---------------------------------------------------------------------------


def brute_log_partition(free_sites, energy, spin_values=(-1, 1)):
    """log of the sum over all spin assignments of exp(-energy)."""
    free_sites = list(free_sites)
    logs = []
    for combo in product(spin_values, repeat=len(free_sites)):
        logs.append(-energy(dict(zip(free_sites, combo))))
    return log_sum_exp(logs)


def brute_expectation(free_sites, energy, obs, spin_values=(-1, 1)):
    """Gibbs average of obs(sigma_map) by direct enumeration."""
    free_sites = list(free_sites)
    logs, values = [], []
    for combo in product(spin_values, repeat=len(free_sites)):
        sigma = dict(zip(free_sites, combo))
        logs.append(-energy(sigma))
        values.append(obs(sigma))
    m = max(logs)
    weights = [math.exp(v - m) for v in logs]
    return sum(w * o for w, o in zip(weights, values)) / sum(weights)


def brute_joint_table(sites, spin_values, disorder_values, nu, energy_of):
    """The exact joint law: P(sigma, eta) ~ nu(eta) exp(-H[eta](sigma)) / Z[eta].

    ``energy_of(sigma_map, eta_map)`` is the quenched Hamiltonian.  Keys are
    (spins, etas) tuples ordered like ``sites``.  Unnormalized nu weights are
    fine; the constant divides out.
    """
    sites = list(sites)
    table = {}
    for etas in product(disorder_values, repeat=len(sites)):
        eta = dict(zip(sites, etas))
        logs = []
        for spins in product(spin_values, repeat=len(sites)):
            logs.append(-energy_of(dict(zip(sites, spins)), eta))
        logz = log_sum_exp(logs)
        lognu = sum(math.log(nu[e]) for e in etas)
        for spins in product(spin_values, repeat=len(sites)):
            w = -energy_of(dict(zip(sites, spins)), eta) + lognu - logz
            table[(spins, etas)] = math.exp(w)
    total = sum(table.values())
    return {k: v / total for k, v in table.items()}


def brute_conditional(joint, sites, V):
    """Condition a joint table on everything off V.

    Returns {(rest_spins, rest_etas): {(patch_spins, patch_etas): prob}} with
    the rest/patch tuples ordered like the originals with V removed/kept.
    """
    sites = list(sites)
    vset = set(V)
    vidx = [i for i, s in enumerate(sites) if s in vset]
    ridx = [i for i in range(len(sites)) if i not in vidx]
    groups = {}
    for (spins, etas), p in joint.items():
        rest = (tuple(spins[i] for i in ridx), tuple(etas[i] for i in ridx))
        patch = (tuple(spins[i] for i in vidx), tuple(etas[i] for i in vidx))
        bucket = groups.setdefault(rest, {})
        bucket[patch] = bucket.get(patch, 0.0) + p
    out = {}
    for rest, patches in groups.items():
        z = sum(patches.values())
        out[rest] = {k: v / z for k, v in patches.items()}
    return out


# ---------------------------------------------------------------------------
# subset transform and components
# ---------------------------------------------------------------------------


def mobius_signed(window_sites, energy):
    """U_A by the literal signed subset sum, recomputed from scratch per A."""
    out = {}
    sites = list(window_sites)
    for k in range(1, len(sites) + 1):
        for A in combinations(sites, k):
            total = 0.0
            for j in range(len(A) + 1):
                for B in combinations(A, j):
                    total += (-1.0) ** (len(A) - j) * energy(B)
            out[A] = total
    return out


def bfs_components(sites):
    """Nearest-neighbour components by breadth-first search."""
    remaining = set(sites)
    comps = []
    while remaining:
        seed = min(remaining)
        queue = [seed]
        remaining.discard(seed)
        comp = {seed}
        while queue:
            s = queue.pop()
            for axis in range(len(s)):
                for step in (-1, 1):
                    t = s[:axis] + (s[axis] + step,) + s[axis + 1:]
                    if t in remaining:
                        remaining.discard(t)
                        comp.add(t)
                        queue.append(t)
        comps.append(tuple(sorted(comp)))
    comps.sort()
    return comps
