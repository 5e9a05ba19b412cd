"""Exact rational verification on small periodic rings.

Everything here is enumerated in exact arithmetic (fractions.Fraction), no
floating point and no tolerance: the tie-break winner within a run of k
fired edges is uniform 1/k, so matching probabilities, the one-step
configuration kernel, invariance deviations, duality differences, and the
coupling marginal are all rational.

Configurations on a ring of n sites are bitmasks (bit x = site x occupied);
edge x joins sites x and x+1 mod n.  Cost guards keep enumeration under
seconds: n <= 12 for matching distributions, n <= 8 for kernels, n <= 20
for the free-particle stir probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

MAX_N_MATCHINGS = 12
MAX_N_KERNEL = 8
MAX_N_PK = 20
MAX_N_COUPLING = 6


def as_ratio(p) -> Fraction:
    """Coerce to an exact Fraction; floats are rejected so that a value like
    0.3 is not silently expanded to its binary image."""
    if isinstance(p, float):
        raise TypeError("pass probabilities as Fraction or '3/10', not float")
    return Fraction(p)


def ring_runs(pattern: int, n: int) -> list[tuple[int, ...]]:
    """Maximal cyclic runs of fired edges in a firing-pattern bitmask."""
    fired = [(pattern >> x) & 1 for x in range(n)]
    if not any(fired):
        return []
    if all(fired):
        return [tuple(range(n))]
    start = next(x for x in range(n) if not fired[x])
    runs = []
    run: list[int] = []
    for off in range(1, n + 1):
        x = (start + off) % n
        if fired[x]:
            run.append(x)
        elif run:
            runs.append(tuple(run))
            run = []
    if run:
        runs.append(tuple(run))
    return runs


def _pattern_prob(pattern: int, n: int, p: Fraction) -> Fraction:
    c = bin(pattern).count("1")
    return p**c * (1 - p) ** (n - c)


def matchings_distribution(n: int, p) -> dict[frozenset, Fraction]:
    """Exact law of the stirred-edge set for one time step.

    Enumerates all 2^n firing patterns; within each maximal run of k fired
    edges each edge wins with probability 1/k, independently across runs
    (a fully fired ring is a single cyclic run of length n).
    """
    p = as_ratio(p)
    if not 2 <= n <= MAX_N_MATCHINGS:
        raise ValueError(f"n must be in [2, {MAX_N_MATCHINGS}]")
    if not 0 <= p < 1:
        raise ValueError("p must be in [0, 1)")
    dist: dict[frozenset, Fraction] = {}
    for pattern in range(1 << n):
        base = _pattern_prob(pattern, n, p)
        if base == 0:
            continue
        combos: list[tuple[list[int], Fraction]] = [([], base)]
        for run in ring_runs(pattern, n):
            share = Fraction(1, len(run))
            combos = [
                (chosen + [w], q * share) for (chosen, q) in combos for w in run
            ]
        for chosen, q in combos:
            key = frozenset(chosen)
            dist[key] = dist.get(key, Fraction(0)) + q
    return dist


def apply_matching_config(eta: int, matching, n: int) -> int:
    """Swap occupancy bits across each matching edge."""
    out = eta
    for e in matching:
        a, b = e, (e + 1) % n
        ba = (eta >> a) & 1
        bb = (eta >> b) & 1
        if ba != bb:
            out ^= (1 << a) | (1 << b)
    return out


def apply_matching_set(sites: frozenset, matching, n: int | None) -> frozenset:
    """Move a finite site set by the swap permutation of a matching.

    n = None works on Z (used by the coupling enumeration on the ring via
    canonical edges, and by tests on the line)."""
    out = set(sites)
    for e in matching:
        a = e
        b = (e + 1) % n if n is not None else e + 1
        ina, inb = a in out, b in out
        if ina != inb:
            if ina:
                out.remove(a)
                out.add(b)
            else:
                out.remove(b)
                out.add(a)
    return frozenset(out)


@dataclass
class RingKernel:
    """One-step configuration transition kernel, exact rationals.

    probs[eta][eta'] is the transition probability; omitted entries are 0.
    """

    n: int
    p: Fraction
    probs: dict[int, dict[int, Fraction]]

    def row(self, eta: int) -> dict[int, Fraction]:
        return self.probs[eta]

    def prob(self, eta: int, eta2: int) -> Fraction:
        return self.probs[eta].get(eta2, Fraction(0))

    def apply(self, mu: dict[int, Fraction]) -> dict[int, Fraction]:
        out: dict[int, Fraction] = {}
        for eta, m in mu.items():
            if m == 0:
                continue
            for eta2, q in self.probs[eta].items():
                out[eta2] = out.get(eta2, Fraction(0)) + m * q
        return out


def config_kernel(n: int, p) -> RingKernel:
    p = as_ratio(p)
    if not 2 <= n <= MAX_N_KERNEL:
        raise ValueError(f"n must be in [2, {MAX_N_KERNEL}] for kernels")
    dist = matchings_distribution(n, p)
    probs: dict[int, dict[int, Fraction]] = {eta: {} for eta in range(1 << n)}
    for matching, q in dist.items():
        for eta in range(1 << n):
            eta2 = apply_matching_config(eta, matching, n)
            row = probs[eta]
            row[eta2] = row.get(eta2, Fraction(0)) + q
    return RingKernel(n, p, probs)


def kernel_to_csv(kernel: RingKernel) -> str:
    """Sparse export: one line per nonzero entry, columns
    eta_index, eta_prime_index, numerator, denominator."""
    lines = ["eta,eta_prime,numerator,denominator"]
    for eta in range(1 << kernel.n):
        for eta2 in sorted(kernel.probs[eta]):
            q = kernel.probs[eta][eta2]
            if q != 0:
                lines.append(f"{eta},{eta2},{q.numerator},{q.denominator}")
    return "\n".join(lines) + "\n"


def bernoulli_measure(n: int, rho) -> dict[int, Fraction]:
    rho = as_ratio(rho)
    if not 0 <= rho <= 1:
        raise ValueError("rho must be in [0, 1]")
    out = {}
    for eta in range(1 << n):
        k = bin(eta).count("1")
        out[eta] = rho**k * (1 - rho) ** (n - k)
    return out


def sector_measure(n: int, k: int) -> dict[int, Fraction]:
    """Uniform measure on the k-particle sector (exchangeable)."""
    states = [eta for eta in range(1 << n) if bin(eta).count("1") == k]
    q = Fraction(1, len(states))
    return {eta: (q if bin(eta).count("1") == k else Fraction(0)) for eta in range(1 << n)}


def invariance_deviation(kernel: RingKernel, mu: dict[int, Fraction]) -> Fraction:
    """max over configurations of |(mu K)(eta) - mu(eta)|, exact."""
    nxt = kernel.apply(mu)
    dev = Fraction(0)
    for eta in range(1 << kernel.n):
        d = abs(nxt.get(eta, Fraction(0)) - mu.get(eta, Fraction(0)))
        if d > dev:
            dev = d
    return dev


def bernoulli_invariance_deviation(n: int, p, rho) -> Fraction:
    kernel = config_kernel(n, p)
    return invariance_deviation(kernel, bernoulli_measure(n, as_ratio(rho)))


# ---------------------------------------------------------------------------
# Duality


def _contains(eta: int, sites) -> bool:
    return all((eta >> x) & 1 for x in sites)


def duality_check(n: int, p, eta: int, A, t: int):
    """Forward occupancy probability vs backward set expectation.

    lhs applies the configuration kernel t times to the point mass at eta
    and sums the probability that every site of A is occupied; rhs runs the
    dual finite SSEP backward: the set A is pushed through t independent
    matchings and the product of eta's occupancies over the landed set is
    averaged.  The two routes are exactly equal pathwise, so the reported
    difference must be zero.
    """
    p = as_ratio(p)
    A = frozenset(A)
    if any(not 0 <= x < n for x in A):
        raise ValueError("A must be a subset of the ring sites")
    if t < 0 or t > 4:
        raise ValueError("t must be in [0, 4]")
    kernel = config_kernel(n, p)
    mu = {eta: Fraction(1)}
    for _ in range(t):
        mu = kernel.apply(mu)
    lhs = sum((q for cfg, q in mu.items() if _contains(cfg, A)), Fraction(0))

    dist = matchings_distribution(n, p)
    cache: dict[tuple[frozenset, int], Fraction] = {}

    def backward(S: frozenset, steps: int) -> Fraction:
        if steps == 0:
            return Fraction(1) if _contains(eta, S) else Fraction(0)
        key = (S, steps)
        if key not in cache:
            total = Fraction(0)
            for matching, q in dist.items():
                total += q * backward(apply_matching_set(S, matching, n), steps - 1)
            cache[key] = total
        return cache[key]

    rhs = backward(A, t)
    return lhs, rhs, lhs - rhs


def hat_mu(mu: dict[int, Fraction], A, n: int) -> Fraction:
    """Probability that every site of A is occupied under mu."""
    A = frozenset(A)
    return sum((q for eta, q in mu.items() if _contains(eta, A)), Fraction(0))


def hat_mu_invariance(n: int, p, rho, A, t: int):
    """Evolve the Bernoulli(rho) measure t steps and compare the occupancy
    probability of A against rho^|A| (exchangeability: it depends on |A|
    only, and for Bernoulli equals rho^|A|)."""
    p = as_ratio(p)
    rho = as_ratio(rho)
    A = frozenset(A)
    kernel = config_kernel(n, p)
    mu = bernoulli_measure(n, rho)
    for _ in range(t):
        mu = kernel.apply(mu)
    got = hat_mu(mu, A, n)
    want = rho ** len(A)
    return got, want, got - want


# ---------------------------------------------------------------------------
# Free-particle stir probabilities


def pk_bounds(p, r: int, k: int) -> tuple[Fraction, Fraction]:
    """Closed-form envelope for the probability that exactly k specified
    free particles stir and the other r-k stay put: a particle stirs if one
    adjacent edge fires alone, and stays if both adjacent edges are silent."""
    p = as_ratio(p)
    lower = (2 * p * (1 - p) ** 2) ** k * ((1 - p) ** 2) ** (r - k)
    upper = (p * (2 - p)) ** k
    return lower, upper


def _site_edges(x: int, n: int) -> tuple[int, int]:
    return ((x - 1) % n, x % n)


def pk_exact(n: int, p, free_positions, stir_subset) -> Fraction:
    """Exact probability that exactly the particles in stir_subset stir
    while the remaining free particles stay put, on a ring of n sites.

    free_positions must be pairwise at cyclic distance >= 4 (the free
    definition keeps three empty sites each side, which makes the relevant
    edge neighborhoods disjoint); other particles are unconstrained because
    firing is independent of occupancy.
    """
    p = as_ratio(p)
    if not 2 <= n <= MAX_N_PK:
        raise ValueError(f"n must be in [2, {MAX_N_PK}]")
    free = sorted(set(int(x) % n for x in free_positions))
    S = set(int(x) % n for x in stir_subset)
    if not S <= set(free):
        raise ValueError("stir_subset must be a subset of free_positions")
    for a, b in combinations(free, 2):
        d = (b - a) % n
        if min(d, n - d) < 4:
            raise ValueError("free positions must be cyclically >= 4 apart")
    stay = [x for x in free if x not in S]
    edges_of = {x: _site_edges(x, n) for x in free}

    total = Fraction(0)
    for pattern in range(1 << n):
        base = _pattern_prob(pattern, n, p)
        if base == 0:
            continue
        factor = Fraction(1)
        runs = ring_runs(pattern, n)
        edge_run = {}
        for j, run in enumerate(runs):
            for e in run:
                edge_run[e] = j
        ok = True
        for x in S:
            if not any(e in edge_run for e in edges_of[x]):
                ok = False  # no fired incident edge: x cannot stir
                break
        if not ok:
            continue
        for j, run in enumerate(runs):
            stir_here = [x for x in S if any(edge_run.get(e) == j for e in edges_of[x])]
            if len(stir_here) >= 2:
                factor = Fraction(0)
                break
            if len(stir_here) == 1:
                c = sum(1 for e in edges_of[stir_here[0]] if edge_run.get(e) == j)
                factor *= Fraction(c, len(run))
            else:
                blocked = sum(
                    1
                    for x in stay
                    for e in edges_of[x]
                    if edge_run.get(e) == j
                )
                factor *= Fraction(len(run) - blocked, len(run))
            if factor == 0:
                break
        total += base * factor
    return total


# ---------------------------------------------------------------------------
# Coupling marginal


def _adjacent_edge(alpha: int, beta: int, n: int) -> int | None:
    if (alpha + 1) % n == beta % n:
        return alpha % n
    if (beta + 1) % n == alpha % n:
        return beta % n
    return None


def _winner_combos(pattern: int, n: int) -> list[tuple[frozenset, Fraction]]:
    """All (matching, probability) winner outcomes for one firing pattern."""
    combos: list[tuple[list[int], Fraction]] = [([], Fraction(1))]
    for run in ring_runs(pattern, n):
        share = Fraction(1, len(run))
        combos = [(ws + [w], q * share) for ws, q in combos for w in run]
    return [(frozenset(ws), q) for ws, q in combos]


def coupled_joint_step(
    n: int, p, C: frozenset, alpha: int, beta: int
) -> dict[tuple[frozenset, frozenset], Fraction]:
    """Exact joint one-step law of (A', B') for A = C + {alpha},
    B = C + {beta} under the shared-edge coupling on a ring.

    While alpha and beta flank one edge e, a three-valued override replaces
    e's firing bit (L: e fires for A only, R: for B only, each with
    probability p).  Tie-break keys are common to both worlds, so the
    winners of the runs touching e are enumerated jointly: the argmin of
    the union run determines which sub-run minima coincide with it.
    """
    p = as_ratio(p)
    if not 3 <= n <= MAX_N_COUPLING:
        raise ValueError(f"n must be in [3, {MAX_N_COUPLING}]")
    if not 0 <= p < Fraction(1, 2):
        raise ValueError("coupling requires p < 1/2")
    A = C | {alpha}
    B = C | {beta}
    e = _adjacent_edge(alpha, beta, n)
    joint: dict[tuple[frozenset, frozenset], Fraction] = {}

    def add(a_set, b_set, q):
        key = (a_set, b_set)
        joint[key] = joint.get(key, Fraction(0)) + q

    if e is None:
        for pattern in range(1 << n):
            base = _pattern_prob(pattern, n, p)
            if base == 0:
                continue
            for matching, q in _winner_combos(pattern, n):
                add(
                    apply_matching_set(A, matching, n),
                    apply_matching_set(B, matching, n),
                    base * q,
                )
        return joint

    others = [x for x in range(n) if x != e]
    star_branches = [("L", p), ("R", p), ("0", 1 - 2 * p)]
    for bits in range(1 << (n - 1)):
        pattern0 = 0
        for i, edge in enumerate(others):
            if (bits >> i) & 1:
                pattern0 |= 1 << edge
        base = (
            p ** bin(pattern0).count("1")
            * (1 - p) ** (n - 1 - bin(pattern0).count("1"))
        )
        if base == 0:
            continue
        for star, q_star in star_branches:
            if q_star == 0:
                continue
            w = base * q_star
            if star == "0":
                for matching, q in _winner_combos(pattern0, n):
                    add(
                        apply_matching_set(A, matching, n),
                        apply_matching_set(B, matching, n),
                        w * q,
                    )
                continue
            pat_with = pattern0 | (1 << e)
            pat_without = pattern0
            runs_with = ring_runs(pat_with, n)
            runs_without = ring_runs(pat_without, n)
            (union_run,) = [r for r in runs_with if e in r]
            shared_runs = [r for r in runs_with if e not in r]
            sub_runs = [r for r in runs_without if set(r) <= set(union_run)]
            # outcomes on the e-region: (winner in the with-e world,
            # winners of the sub-runs in the without-e world)
            region: list[tuple[int, tuple[int, ...], Fraction]] = []
            m = Fraction(1, len(union_run))
            sub_choices: list[tuple[tuple[int, ...], Fraction]] = [((), Fraction(1))]
            for r in sub_runs:
                share = Fraction(1, len(r))
                sub_choices = [
                    (ws + (x,), q * share) for ws, q in sub_choices for x in r
                ]
            for ws, q in sub_choices:
                region.append((e, ws, m * q))  # union argmin sits at e
            for r in sub_runs:
                rest = [r2 for r2 in sub_runs if r2 != r]
                rest_choices: list[tuple[tuple[int, ...], Fraction]] = [((), Fraction(1))]
                for r2 in rest:
                    share = Fraction(1, len(r2))
                    rest_choices = [
                        (ws + (x,), q * share) for ws, q in rest_choices for x in r2
                    ]
                for wa in r:  # union argmin in this sub-run forces its winner
                    for ws, q in rest_choices:
                        region.append((wa, (wa,) + ws, m * q))
            for matching_shared, q_shared in (
                _winner_combos_from_runs(shared_runs)
            ):
                for wa, wsub, q_region in region:
                    m_with = matching_shared | {wa}
                    m_without = matching_shared | set(wsub)
                    if star == "L":
                        a_next = apply_matching_set(A, m_with, n)
                        b_next = apply_matching_set(B, m_without, n)
                    else:
                        a_next = apply_matching_set(A, m_without, n)
                        b_next = apply_matching_set(B, m_with, n)
                    add(a_next, b_next, w * q_shared * q_region)
    return joint


def _winner_combos_from_runs(runs) -> list[tuple[frozenset, Fraction]]:
    combos: list[tuple[list[int], Fraction]] = [([], Fraction(1))]
    for run in runs:
        share = Fraction(1, len(run))
        combos = [(ws + [w], q * share) for ws, q in combos for w in run]
    return [(frozenset(ws), q) for ws, q in combos]


def uncoupled_set_law(n: int, p, sites: frozenset) -> dict[frozenset, Fraction]:
    """One-step law of a finite site set under the plain stirring step."""
    dist = matchings_distribution(n, p)
    out: dict[frozenset, Fraction] = {}
    for matching, q in dist.items():
        nxt = apply_matching_set(sites, matching, n)
        out[nxt] = out.get(nxt, Fraction(0)) + q
    return out


def coupling_marginal_deviation(n: int, p, states=None) -> Fraction:
    """Worst-case deviation of the coupled A-marginal from the uncoupled
    finite-SSEP law, over the given states (default: all (C, alpha, beta)
    with alpha != beta, both outside C)."""
    p = as_ratio(p)
    if states is None:
        states = []
        sites = range(n)
        for alpha in sites:
            for beta in sites:
                if alpha == beta:
                    continue
                rest = [x for x in sites if x not in (alpha, beta)]
                for r in range(len(rest) + 1):
                    for C in combinations(rest, r):
                        states.append((frozenset(C), alpha, beta))
    worst = Fraction(0)
    for C, alpha, beta in states:
        joint = coupled_joint_step(n, p, C, alpha, beta)
        marg_a: dict[frozenset, Fraction] = {}
        for (a_next, _b_next), q in joint.items():
            marg_a[a_next] = marg_a.get(a_next, Fraction(0)) + q
        ref = uncoupled_set_law(n, p, C | {alpha})
        support = set(marg_a) | set(ref)
        for s in support:
            d = abs(marg_a.get(s, Fraction(0)) - ref.get(s, Fraction(0)))
            if d > worst:
                worst = d
    return worst


def coupling_discrepancy_bound(n: int, p, C: frozenset, alpha: int, beta: int) -> int:
    """Largest |A' - B'| over all outcomes of one coupled step; the
    CouplingState representation requires this to be at most 1."""
    joint = coupled_joint_step(n, p, C, alpha, beta)
    return max(len(a - b) for (a, b) in joint)
