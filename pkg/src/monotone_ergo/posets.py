"""Finite partial orders, monotone functions, stochastic domination and
monotone (Strassen) couplings.

A finite poset is stored as a dense boolean relation matrix.  Stochastic
domination between two distributions is characterised either by up-set
enumeration (mu(U) <= nu(U) for every upward-closed U) or, equivalently,
by feasibility of a transport plan supported on the graph of the order;
the two routes serve as independent cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .maxflow import max_flow_bipartite

UPSET_ENUM_LIMIT = 24
DOMINATION_TOL = 1e-12
MARGINAL_TOL = 1e-10


class PosetError(ValueError):
    pass


class NotReflexive(PosetError):
    def __init__(self, i):
        self.i = i
        super().__init__(f"relation not reflexive at element {i}")


class NotAntisymmetric(PosetError):
    def __init__(self, i, j):
        self.i, self.j = i, j
        super().__init__(f"relation not antisymmetric at pair ({i}, {j})")


class NotTransitive(PosetError):
    def __init__(self, i, j, k):
        self.i, self.j, self.k = i, j, k
        super().__init__(f"relation not transitive at triple ({i}, {j}, {k})")


class TooLarge(PosetError):
    def __init__(self, n, limit):
        self.n = n
        super().__init__(f"size {n} exceeds enumeration guard {limit}")


@dataclass(frozen=True)
class FinitePoset:
    n: int
    leq: np.ndarray  # boolean n x n, leq[i, j] <=> i precedes j
    labels: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "leq", np.asarray(self.leq, dtype=bool))
        self.leq.setflags(write=False)

    def comparable_pairs(self):
        """All ordered pairs (i, j) with i <= j and i != j."""
        ii, jj = np.nonzero(self.leq & ~np.eye(self.n, dtype=bool))
        return list(zip(ii.tolist(), jj.tolist()))

    def up_closure(self, subset) -> frozenset:
        idx = list(subset)
        if not idx:
            return frozenset()
        mask = self.leq[idx, :].any(axis=0)
        return frozenset(np.nonzero(mask)[0].tolist())

    def to_json_obj(self):
        obj = {"n": self.n, "leq": self.leq.astype(int).tolist()}
        if self.labels is not None:
            obj["labels"] = list(self.labels)
        return obj

    @staticmethod
    def from_json_obj(obj) -> "FinitePoset":
        labels = tuple(obj["labels"]) if obj.get("labels") else None
        return validate_poset(np.asarray(obj["leq"], dtype=bool), labels=labels)


@dataclass(frozen=True)
class Distribution:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if np.any(p < 0):
            raise ValueError("negative probability entry")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "p", p)
        self.p.setflags(write=False)

    def to_json_obj(self):
        return {"p": self.p.tolist()}

    @staticmethod
    def from_json_obj(obj) -> "Distribution":
        return Distribution(np.asarray(obj["p"], dtype=float))


@dataclass(frozen=True)
class Coupling:
    plan: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "plan", np.asarray(self.plan, dtype=float))
        self.plan.setflags(write=False)

    def marginal_error(self, mu: Distribution, nu: Distribution) -> float:
        row = np.abs(self.plan.sum(axis=1) - mu.p).max()
        col = np.abs(self.plan.sum(axis=0) - nu.p).max()
        return max(row, col)


@dataclass(frozen=True)
class Infeasible:
    """Certified negative answer: a witness up-set U with mu(U) > nu(U)."""
    witness_upset: frozenset
    mu_mass: float
    nu_mass: float


def validate_poset(leq, labels=None) -> FinitePoset:
    leq = np.asarray(leq)
    if leq.ndim != 2 or leq.shape[0] != leq.shape[1]:
        raise PosetError("relation matrix must be square")
    leq = leq.astype(bool)
    n = leq.shape[0]
    diag = np.diagonal(leq)
    if not diag.all():
        raise NotReflexive(int(np.nonzero(~diag)[0][0]))
    both = leq & leq.T & ~np.eye(n, dtype=bool)
    if both.any():
        i, j = np.argwhere(both)[0]
        raise NotAntisymmetric(int(i), int(j))
    # transitive closure check: leq @ leq must not reach outside leq
    reach = leq @ leq
    bad = reach & ~leq
    if bad.any():
        i, k = np.argwhere(bad)[0]
        j = int(np.nonzero(leq[i] & leq[:, k])[0][0])
        raise NotTransitive(int(i), j, int(k))
    return FinitePoset(n=n, leq=leq, labels=labels)


def _upset_masks(poset: FinitePoset) -> np.ndarray:
    """Bitmasks of all upward-closed subsets (ascending order)."""
    n = poset.n
    if n > UPSET_ENUM_LIMIT:
        raise TooLarge(n, UPSET_ENUM_LIMIT)
    uprows = np.array(
        [sum(1 << j for j in np.nonzero(poset.leq[i])[0]) for i in range(n)],
        dtype=np.int64)
    masks = np.arange(1 << n, dtype=np.int64)
    closure = np.zeros_like(masks)
    for i in range(n):
        closure |= np.where(masks & (1 << i), uprows[i], 0)
    return masks[closure == masks]


def upsets(poset: FinitePoset) -> list[frozenset]:
    out = []
    for mask in _upset_masks(poset):
        out.append(frozenset(i for i in range(poset.n) if mask >> i & 1))
    return out


def _mask_sums(masks: np.ndarray, weights: np.ndarray) -> np.ndarray:
    sums = np.zeros(len(masks))
    for i, w in enumerate(weights):
        sums += np.where(masks >> i & 1, w, 0.0)
    return sums


def stochastically_dominates(mu: Distribution, nu: Distribution,
                             poset: FinitePoset) -> bool:
    """True iff mu(U) <= nu(U) for every up-set U (mu below nu)."""
    if poset.n > UPSET_ENUM_LIMIT:
        return not isinstance(strassen_coupling(mu, nu, poset), Infeasible)
    masks = _upset_masks(poset)
    mu_s = _mask_sums(masks, mu.p)
    nu_s = _mask_sums(masks, nu.p)
    return bool(np.all(mu_s <= nu_s + DOMINATION_TOL))


def violating_upset(mu: Distribution, nu: Distribution,
                    poset: FinitePoset) -> frozenset | None:
    """A maximally violating up-set, or None if mu is dominated by nu."""
    if poset.n > UPSET_ENUM_LIMIT:
        res = strassen_coupling(mu, nu, poset)
        return res.witness_upset if isinstance(res, Infeasible) else None
    masks = _upset_masks(poset)
    gap = _mask_sums(masks, mu.p) - _mask_sums(masks, nu.p)
    k = int(np.argmax(gap))
    if gap[k] <= DOMINATION_TOL:
        return None
    mask = int(masks[k])
    return frozenset(i for i in range(poset.n) if mask >> i & 1)


def strassen_coupling(mu: Distribution, nu: Distribution,
                      poset: FinitePoset):
    """Monotone coupling of mu below nu, or a certified Infeasible.

    Feasibility is decided by max-flow on the bipartite graph whose middle
    arcs follow the order relation; on infeasibility the source side of a
    min cut yields a violating up-set witness.
    """
    n = poset.n
    flow, value, source_side = max_flow_bipartite(mu.p, nu.p, poset.leq)
    if value >= 1.0 - MARGINAL_TOL:
        plan = flow.copy()
        # polish the tiny max-flow residual so marginals are exact
        deficit_r = mu.p - plan.sum(axis=1)
        deficit_c = nu.p - plan.sum(axis=0)
        if deficit_r.max() > 0 and deficit_c.max() > 0:
            for i in np.nonzero(deficit_r > 0)[0]:
                for j in np.nonzero(poset.leq[i])[0]:
                    move = min(deficit_r[i], max(deficit_c[j], 0.0))
                    if move > 0:
                        plan[i, j] += move
                        deficit_r[i] -= move
                        deficit_c[j] -= move
        return Coupling(plan)
    witness = poset.up_closure(source_side)
    mu_mass = float(mu.p[list(witness)].sum()) if witness else 0.0
    nu_mass = float(nu.p[list(witness)].sum()) if witness else 0.0
    return Infeasible(witness_upset=witness, mu_mass=mu_mass, nu_mass=nu_mass)


def is_monotone(f, poset: FinitePoset) -> bool:
    f = np.asarray(f, dtype=float)
    ii, jj = np.nonzero(poset.leq)
    return bool(np.all(f[ii] <= f[jj] + 1e-15))


def chain_poset(n: int) -> FinitePoset:
    """Total order 0 <= 1 <= ... <= n-1."""
    idx = np.arange(n)
    return FinitePoset(n=n, leq=idx[:, None] <= idx[None, :])


def antichain_poset(n: int) -> FinitePoset:
    """Trivial order: comparable only to itself."""
    return FinitePoset(n=n, leq=np.eye(n, dtype=bool))
