"""Partition-function ratios under local disorder flips, and the joint law.

The central object is the log-ratio

    log_q(V; eta1, eta2, eta_rest)
        = log Z[eta1 on V, eta_rest off V] - log Z[eta2 on V, eta_rest off V]

for a working box with a fixed spin boundary condition.  It is antisymmetric
in (eta1, eta2), depends only on the disorder where the flips differ, and
satisfies a chain rule in the middle argument; :meth:`QKernelContext.check_q_properties`
measures all three on random sub-boxes.  The same ratio has a second,
independent route as the Gibbs expectation of the exponential of the local
energy difference, used as a cross-check (never collapsed into the first).

A :class:`QKernelContext` also evaluates the conditional law of the joint
(spin, disorder) measure on small site sets: the weight of a joint patch is
the exponential of minus the annealed terms touching it, deflated by the
partition function at its disorder — the extra Z-factor is exactly what a
plain Gibbs form lacks, and everything downstream quantifies how far it can
be folded back into an interaction.
"""

from __future__ import annotations

import math
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .errors import CapExceededError, ConfigError
from .lattice import Box, SiteSet, as_site
from .model import BoundaryCondition, ModelSpec
from .quenched import QuenchedEnsemble

JOINT_WINDOW_CAP = 4  # max |V| for single-call joint conditionals


class QKernelContext:
    """Working box, boundary condition, and a partition-function cache.

    The disorder domain is every site read by a kept interaction term: the
    box itself under a free boundary, the box plus its range-r collar under
    a fixed one.  ``log Z`` values are cached per full disorder assignment,
    so repeated ratio evaluations over a common pool of configurations cost
    one sweep each.
    """

    def __init__(
        self,
        spec: ModelSpec,
        box: Box,
        bc: BoundaryCondition | None = None,
        backend: str = "auto",
    ):
        self.spec = spec
        self.box = box
        self.bc = bc if bc is not None else BoundaryCondition.free()
        self.backend = backend
        proto = QuenchedEnsemble(
            spec,
            box,
            {s: spec.disorder_values[0] for s in box.expand(spec.range).sites()},
            self.bc,
        )
        self.term_sets = proto.term_sets
        self.frozen_sigma = proto.frozen_sigma
        domain = set()
        for A in self.term_sets:
            domain.update(A.sites)
        self.eta_domain = tuple(sorted(domain))
        self._domain_index = {s: i for i, s in enumerate(self.eta_domain)}
        self._logz: dict = {}
        self._mean_logz: dict = {}

    # -- plumbing --------------------------------------------------------------

    def _eta_key(self, eta: Mapping) -> tuple:
        try:
            return tuple(eta[s] for s in self.eta_domain)
        except KeyError:
            missing = [s for s in self.eta_domain if s not in eta]
            raise ConfigError(f"disorder not assigned on sites {missing}") from None

    def ensemble(self, eta: Mapping) -> QuenchedEnsemble:
        return QuenchedEnsemble(
            self.spec,
            self.box,
            eta,
            self.bc,
            _terms=self.term_sets,
            _frozen=self.frozen_sigma,
        )

    def log_partition_at(self, eta: Mapping) -> float:
        key = self._eta_key(eta)
        hit = self._logz.get(key)
        if hit is None:
            hit = self.ensemble(eta).log_partition(self.backend)
            self._logz[key] = hit
        return hit

    def _merge(self, V: SiteSet, eta_V: Mapping, eta_rest: Mapping) -> dict:
        out = {}
        for s in self.eta_domain:
            if s in V:
                out[s] = eta_V[s]
            elif s in eta_rest:
                out[s] = eta_rest[s]
        return out

    def _check_window(self, V) -> SiteSet:
        Vset = V if isinstance(V, SiteSet) else SiteSet(V)
        if not Vset.issubset(self.box):
            raise ValueError(f"flip window {Vset.sites} is not inside the box")
        return Vset

    # -- the log-ratio and its expectation route --------------------------------

    def log_q(
        self, V, eta1: Mapping, eta2: Mapping, eta_rest: Mapping
    ) -> float:
        """log Z at (eta1 on V) minus log Z at (eta2 on V), rest shared."""
        Vset = self._check_window(V)
        m1 = self._merge(Vset, eta1, eta_rest)
        m2 = self._merge(Vset, eta2, eta_rest)
        return self.log_partition_at(m1) - self.log_partition_at(m2)

    def log_q_via_expectation(
        self, V, eta1: Mapping, eta2: Mapping, eta_rest: Mapping
    ) -> float:
        """Same ratio through the Gibbs average of exp(-energy difference).

        Computed at the eta2 ensemble by attaching, for every interaction set
        meeting ``V``, the term-by-term difference between the two disorder
        assignments, then reading off the extended normalization.  Kept as a
        genuinely separate evaluation path.
        """
        Vset = self._check_window(V)
        m1 = self._merge(Vset, eta1, eta_rest)
        m2 = self._merge(Vset, eta2, eta_rest)
        ens = self.ensemble(m2)
        extras = []
        for A in self.term_sets:
            if Vset.isdisjoint(A):
                continue
            extras.append(
                ens.extra_term(
                    A, lambda sig, A=A: self.spec.phi(A, sig, m1) - self.spec.phi(A, sig, m2)
                )
            )
        return ens.log_expectation_exp_neg(extras, self.backend)

    # -- property report ---------------------------------------------------------

    def check_q_properties(
        self,
        trials: int = 200,
        seed: int = 0,
        tol: float = 1e-10,
    ) -> dict:
        """Measure antisymmetry, flip-support restriction, and the chain rule.

        Random rectangular sub-boxes and disorder triples; returns a JSON
        report with the worst absolute violation per property and a witness
        whenever the tolerance is exceeded.
        """
        rng = np.random.default_rng(seed)
        values = self.spec.disorder_values
        box = self.box

        def rand_subbox(outer_lo, outer_hi):
            lo, hi = [], []
            for a, b in zip(outer_lo, outer_hi):
                u = int(rng.integers(a, b + 1))
                v = int(rng.integers(a, b + 1))
                lo.append(min(u, v))
                hi.append(max(u, v))
            return Box(tuple(lo), tuple(hi))

        def rand_eta(sites):
            picks = rng.integers(0, len(values), size=len(sites))
            return {s: values[int(k)] for s, k in zip(sites, picks)}

        worst = {
            "antisymmetry": (0.0, None),
            "restriction": (0.0, None),
            "chain_rule": (0.0, None),
        }
        for _ in range(trials):
            lam = rand_subbox(box.lower, box.upper)
            lam_sites = tuple(lam.sites())
            sub = rand_subbox(lam.lower, lam.upper)
            sub_sites = tuple(sub.sites())
            rest_sites = [s for s in self.eta_domain if s not in lam_sites]
            eta_rest = rand_eta(rest_sites)
            e1 = rand_eta(lam_sites)
            e2 = rand_eta(lam_sites)
            e3 = rand_eta(lam_sites)

            forward = self.log_q(lam_sites, e1, e2, eta_rest)
            backward = self.log_q(lam_sites, e2, e1, eta_rest)
            self._score(worst, "antisymmetry", abs(forward + backward), {
                "window": [list(s) for s in lam_sites],
                "eta1": [e1[s] for s in lam_sites],
                "eta2": [e2[s] for s in lam_sites],
            })

            # flip only inside the sub-window; the ratio must restrict
            e2r = dict(e1)
            for s in sub_sites:
                e2r[s] = e2[s]
            big = self.log_q(lam_sites, e1, e2r, eta_rest)
            shared = dict(eta_rest)
            for s in lam_sites:
                if s not in sub_sites:
                    shared[s] = e1[s]
            small = self.log_q(sub_sites, e1, e2, shared)
            self._score(worst, "restriction", abs(big - small), {
                "window": [list(s) for s in lam_sites],
                "sub_window": [list(s) for s in sub_sites],
                "eta1": [e1[s] for s in lam_sites],
                "eta2": [e2r[s] for s in lam_sites],
            })

            chain = (
                self.log_q(lam_sites, e1, e2, eta_rest)
                + self.log_q(lam_sites, e2, e3, eta_rest)
                - self.log_q(lam_sites, e1, e3, eta_rest)
            )
            self._score(worst, "chain_rule", abs(chain), {
                "window": [list(s) for s in lam_sites],
                "eta1": [e1[s] for s in lam_sites],
                "eta2": [e2[s] for s in lam_sites],
                "eta3": [e3[s] for s in lam_sites],
            })

        properties = []
        for name, (value, witness) in worst.items():
            entry = {
                "property": name,
                "trials": trials,
                "max_abs_violation": value,
            }
            if value > tol and witness is not None:
                entry["witness"] = witness
            properties.append(entry)
        return {
            "box": self.box.to_json(),
            "boundary": self.bc.kind,
            "trials": trials,
            "seed": seed,
            "tol": tol,
            "properties": properties,
            "pass": all(p["max_abs_violation"] <= tol for p in properties),
        }

    @staticmethod
    def _score(worst: dict, name: str, value: float, witness: dict) -> None:
        if value > worst[name][0]:
            worst[name] = (value, witness)

    # -- conditional law of the joint measure ------------------------------------

    def annealed_log_weight(
        self, V: SiteSet, sigma_full: Mapping, eta_full: Mapping
    ) -> float:
        """Minus the annealed terms meeting ``V`` (the numerator exponent)."""
        total = 0.0
        for A in self.term_sets:
            if not V.isdisjoint(A):
                total -= self.spec.phi(A, sigma_full, eta_full)
        for x in V:
            total += self.spec.log_nu(eta_full[x])
        return total

    def joint_conditional(
        self,
        V,
        sigma_rest: Mapping,
        eta_rest: Mapping,
        cap: int = JOINT_WINDOW_CAP,
    ) -> dict:
        """Conditional law of the joint measure on ``V`` given the rest.

        Returns ``{(spin tuple, disorder tuple): probability}`` over joint
        patches on ``V`` (tuples ordered like ``sorted(V)``), conditioning on
        spins elsewhere in the box and disorder elsewhere in the domain.  The
        weight of a patch divides out the partition function at the patch's
        disorder before normalizing.
        """
        Vset = self._check_window(V)
        if len(Vset) > cap:
            raise CapExceededError("joint conditional window", len(Vset), cap)
        sites = Vset.sites
        sigma_full = dict(self.frozen_sigma)
        for s in self.box.sites():
            if s in Vset:
                continue
            if s not in sigma_rest:
                raise ConfigError(f"conditioning spin missing at {s}")
            sigma_full[s] = sigma_rest[s]

        logw = {}
        for spins in product(self.spec.spin_values, repeat=len(sites)):
            for etas in product(self.spec.disorder_values, repeat=len(sites)):
                for s, v in zip(sites, spins):
                    sigma_full[s] = v
                eta_full = self._merge(Vset, dict(zip(sites, etas)), eta_rest)
                logw[(spins, etas)] = self.annealed_log_weight(
                    Vset, sigma_full, eta_full
                ) - self.log_partition_at(eta_full)
        peak = max(logw.values())
        weights = {k: math.exp(v - peak) for k, v in logw.items()}
        norm = sum(weights.values())
        return {k: w / norm for k, w in weights.items()}

    def joint_conditional_all(self, V, cap: int = JOINT_WINDOW_CAP):
        """Conditional tables for every conditioning configuration at once.

        Returns ``(rest_spin_sites, rest_eta_sites, patches, table)`` where
        ``table[i, j, k]`` is the probability of joint patch ``patches[k]``
        given the i-th spin assignment on ``rest_spin_sites`` and the j-th
        disorder assignment on ``rest_eta_sites`` (mixed-radix enumeration,
        first site least significant).  Vectorized over everything; the
        single-call route spot-checks it.
        """
        Vset = self._check_window(V)
        if len(Vset) > cap:
            raise CapExceededError("joint conditional window", len(Vset), cap)
        sites = Vset.sites
        qs = len(self.spec.spin_values)
        qe = len(self.spec.disorder_values)
        box_sites = tuple(self.box.sites())
        rest_spin_sites = tuple(s for s in box_sites if s not in Vset)
        rest_eta_sites = tuple(s for s in self.eta_domain if s not in Vset)
        n_rs = qs ** len(rest_spin_sites)
        n_re = qe ** len(rest_eta_sites)
        patches = [
            (spins, etas)
            for spins in product(self.spec.spin_values, repeat=len(sites))
            for etas in product(self.spec.disorder_values, repeat=len(sites))
        ]
        if n_rs * n_re * len(patches) > 1 << 26:
            raise CapExceededError(
                "joint conditional batch",
                int(math.log2(max(2, n_rs * n_re * len(patches)))),
                26,
            )

        spin_digits = {
            s: (np.arange(n_rs, dtype=np.int64) // qs**i) % qs
            for i, s in enumerate(rest_spin_sites)
        }
        eta_digits = {
            s: (np.arange(n_re, dtype=np.int64) // qe**i) % qe
            for i, s in enumerate(rest_eta_sites)
        }
        eta_vals = list(self.spec.disorder_values)

        # log Z for every disorder assignment of the domain, reused per patch;
        # indexed first-site-least-significant to match the patch lookup below
        logz = np.zeros((n_re, qe ** len(sites)))
        for j in range(n_re):
            rest = {s: eta_vals[int(eta_digits[s][j])] for s in rest_eta_sites}
            for etas in product(eta_vals, repeat=len(sites)):
                pk = sum(eta_vals.index(e) * qe**i for i, e in enumerate(etas))
                full = self._merge(Vset, dict(zip(sites, etas)), rest)
                logz[j, pk] = self.log_partition_at(full)

        table = np.zeros((n_rs, n_re, len(patches)))
        for k, (spins, etas) in enumerate(patches):
            pk = 0
            for i, e in enumerate(etas):
                pk += eta_vals.index(e) * qe**i
            # spin-dependent annealed terms: vectorize over rest assignments
            log_num = np.zeros((n_rs, n_re))
            log_num -= logz[None, :, pk]
            for x, e in zip(sites, etas):
                log_num += self.spec.log_nu(e)
            patch_sigma = dict(zip(sites, spins))
            patch_eta = dict(zip(sites, etas))
            for A in self.term_sets:
                if Vset.isdisjoint(A):
                    continue
                contrib = self._term_over_rest(
                    A, patch_sigma, patch_eta, spin_digits, eta_digits,
                    rest_spin_sites, rest_eta_sites, n_rs, n_re,
                )
                log_num -= contrib
            table[:, :, k] = log_num
        peak = table.max(axis=2, keepdims=True)
        np.exp(table - peak, out=table)
        table /= table.sum(axis=2, keepdims=True)
        return rest_spin_sites, rest_eta_sites, patches, table

    def _term_over_rest(
        self, A, patch_sigma, patch_eta, spin_digits, eta_digits,
        rest_spin_sites, rest_eta_sites, n_rs, n_re,
    ) -> np.ndarray:
        """One interaction term evaluated for every conditioning assignment."""
        spin_vals = list(self.spec.spin_values)
        eta_vals = list(self.spec.disorder_values)
        free_spin = [s for s in A if s in set(rest_spin_sites)]
        free_eta = [s for s in A if s in set(rest_eta_sites)]
        qs, qe = len(spin_vals), len(eta_vals)
        out = np.zeros((n_rs, n_re))
        sigma = dict(patch_sigma)
        for s in A:
            if s not in sigma and s not in set(free_spin):
                sigma[s] = self.frozen_sigma[s]
        eta = dict(patch_eta)
        # enumerate the term's own free digits, paint the value by mask
        for sp_combo in product(range(qs), repeat=len(free_spin)):
            for s, dgt in zip(free_spin, sp_combo):
                sigma[s] = spin_vals[dgt]
            mask_s = np.ones(n_rs, dtype=bool)
            for s, dgt in zip(free_spin, sp_combo):
                mask_s &= spin_digits[s] == dgt
            for et_combo in product(range(qe), repeat=len(free_eta)):
                for s, dgt in zip(free_eta, et_combo):
                    eta[s] = eta_vals[dgt]
                mask_e = np.ones(n_re, dtype=bool)
                for s, dgt in zip(free_eta, et_combo):
                    mask_e &= eta_digits[s] == dgt
                v = self.spec.phi(A, sigma, eta)
                if v != 0.0:
                    out[np.ix_(mask_s, mask_e)] += v
        return out
