"""Structural analysis of solved plans and standalone characterization checks.

LP vertex solutions on a coarse threshold grid can pool many voter types into
one threshold column (the continuum assigns them pair thresholds that all
round to the same grid point).  Verification therefore first canonicalizes an
assignment into two-type districts: column masses and thresholds are kept
exactly (so the objective and feasibility are unchanged) while pooled mass is
re-matched negatively assortatively, most extreme types into the strongest
columns.  All structural checks run on that district decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .model import NORMAL, GerryOptError, ProblemInstance, TasteDistribution
from .lp import AssignmentMatrix, DualCertificate, SUPPORT_TOL

DUST = 1e-13


class RegimeLabel(Enum):
    SEGREGATION = "Segregation"
    NEGATIVE_ASSORTATIVE = "NegativeAssortative"
    PMP = "PMP"
    MIXED_PMP = "MixedPMP"
    MIXED_POP = "MixedPOP"
    POP = "POP"
    OTHER_Y = "OtherY"
    NOT_PACK_AND_PAIR = "NotPackAndPair"


@dataclass(frozen=True)
class CanonicalDistrict:
    threshold: float
    types: np.ndarray
    weights: np.ndarray
    mass: float
    kind: str = "packed"  # "packed", "pair", or "pool" (degenerate pool member)

    @property
    def packed(self) -> bool:
        return self.kind == "packed"

    @property
    def span(self) -> tuple[float, float]:
        return float(self.types.min()), float(self.types.max())


@dataclass(frozen=True)
class RefinedSolution:
    districts: list           # CanonicalDistrict, sorted by threshold
    seg_mass: np.ndarray      # per-type mass in packed districts
    pair_mass: np.ndarray     # per-type mass in paired districts
    leftover: float           # pooled mass the re-matching could not place
    refined: bool             # True if any pooled column was re-matched

    @property
    def ok(self) -> bool:
        return self.leftover <= 1e-8


def refine_assignment(assignment: AssignmentMatrix, tol_mass: float = SUPPORT_TOL) -> RefinedSolution:
    """Decompose an assignment into packed and two-type districts.

    Columns with one active type become packed districts; columns with two
    stay as they are.  If any column has three or more active types, all
    non-degenerate columns are pooled and re-matched greedily: walking columns
    from the strongest down, repeatedly pair the most extreme remaining low
    type with the most extreme remaining high type at the exact balance ratio
    for that column's threshold.
    """
    pi = assignment.pi
    grid = assignment.type_grid
    thr = assignment.threshold_grid
    vote = assignment.vote
    n = grid.size
    col_mass = pi.sum(axis=0)

    packed: list[CanonicalDistrict] = []
    two_type_cols: list[int] = []
    pooled_needed = False
    pair_cols: list[int] = []
    seg_mass = np.zeros(n)
    pair_mass = np.zeros(n)

    for j in np.flatnonzero(col_mass > tol_mass):
        active = np.flatnonzero(pi[:, j] > tol_mass)
        if active.size == 1:
            i = int(active[0])
            packed.append(
                CanonicalDistrict(
                    threshold=float(thr[j]),
                    types=grid[[i]].copy(),
                    weights=np.array([1.0]),
                    mass=float(col_mass[j]),
                    kind="packed",
                )
            )
            seg_mass[i] += col_mass[j]
        else:
            pair_cols.append(j)
            if active.size > 2:
                pooled_needed = True

    districts = list(packed)
    leftover = 0.0

    if not pooled_needed:
        for j in pair_cols:
            active = np.flatnonzero(pi[:, j] > tol_mass)
            w = pi[active, j]
            districts.append(
                CanonicalDistrict(
                    threshold=float(thr[j]),
                    types=grid[active].copy(),
                    weights=w / w.sum(),
                    mass=float(w.sum()),
                    kind="pair",
                )
            )
            pair_mass[active] += w
    else:
        # Re-match within connected clusters of columns whose active type
        # spans overlap; distant pools (e.g. local pooling deep in one tail
        # alongside a central pool) must not trade types with each other.
        spans = {}
        for j in pair_cols:
            active = np.flatnonzero(pi[:, j] > tol_mass)
            spans[j] = (int(active[0]), int(active[-1]))
        clusters: list[list[int]] = []
        # Sharing a single boundary type does not connect two clusters: a tail
        # pool and a central pool may both draw on the type at their common
        # edge without trading any other members.
        for j in sorted(pair_cols, key=lambda j: spans[j][0]):
            lo_j, hi_j = spans[j]
            if clusters and lo_j < clusters[-1][1]:
                clusters[-1][1] = max(clusters[-1][1], hi_j)
                clusters[-1][2].append(j)
            else:
                clusters.append([lo_j, hi_j, [j]])
        cluster_cols = [c[2] for c in clusters]

        def greedy(group, shared: bool):
            """Match one cluster top-down; returns (districts, per-type pair
            mass, leftover). ``shared`` pools all the cluster's columns into
            one remainder; otherwise each column keeps its own members."""
            out: list[CanonicalDistrict] = []
            placed = np.zeros(n)
            left = 0.0
            if shared:
                members = pi[:, group].sum(axis=1)
                members[members < DUST] = 0.0
                col_members = {j: members for j in group}
            else:
                col_members = {}
                for j in group:
                    m = pi[:, j].copy()
                    m[m < DUST] = 0.0
                    col_members[j] = m
            for j in sorted(group, key=lambda j: -thr[j]):
                rem = col_members[j]
                r = thr[j]
                budget = float(col_mass[j])
                while budget > 1e-11:
                    alive = np.flatnonzero(rem > DUST)
                    if alive.size == 0:
                        break
                    lo, hi = int(alive[0]), int(alive[-1])
                    if not (grid[lo] < r - 1e-12 and grid[hi] > r + 1e-12):
                        # A type sitting exactly at this threshold is balanced
                        # by itself: place it as a degenerate pool member
                        # (payoff-equivalent to joining the pool).
                        at_r = alive[np.abs(grid[alive] - r) <= 1e-12]
                        if at_r.size == 0:
                            break
                        i = int(at_r[0])
                        t = min(budget, float(rem[i]))
                        out.append(
                            CanonicalDistrict(
                                threshold=float(r),
                                types=grid[[i]].copy(),
                                weights=np.array([1.0]),
                                mass=t,
                                kind="pool",
                            )
                        )
                        placed[i] += t
                        rem[i] -= t
                        rem[rem < DUST] = 0.0
                        budget -= t
                        continue
                    v_lo, v_hi = vote[lo, j], vote[hi, j]
                    rho = (v_hi - 0.5) / (v_hi - v_lo)  # weight on the low type
                    t = min(budget, rem[lo] / rho, rem[hi] / (1.0 - rho))
                    out.append(
                        CanonicalDistrict(
                            threshold=float(r),
                            types=grid[[lo, hi]].copy(),
                            weights=np.array([rho, 1.0 - rho]),
                            mass=float(t),
                            kind="pair",
                        )
                    )
                    placed[lo] += t * rho
                    placed[hi] += t * (1.0 - rho)
                    rem[lo] -= t * rho
                    rem[hi] -= t * (1.0 - rho)
                    rem[rem < DUST] = 0.0
                    budget -= t
                left += max(budget, 0.0)
            if shared:
                left += float(members.sum())
            else:
                left += float(sum(m.sum() for m in col_members.values()))
            return out, placed, left

        for group in cluster_cols:
            out, placed, left = greedy(group, shared=True)
            if left > 1e-9:
                # The cluster's column masses do not admit a nested matching;
                # fall back to decomposing each column on its own members,
                # which always conserves mass exactly.
                out, placed, left = greedy(group, shared=False)
            districts.extend(out)
            pair_mass += placed
            leftover += left

    districts.sort(key=lambda d: d.threshold)
    return RefinedSolution(
        districts=districts,
        seg_mass=seg_mass,
        pair_mass=pair_mass,
        leftover=float(leftover),
        refined=pooled_needed,
    )


@dataclass(frozen=True)
class SingleDippedReport:
    ok: bool
    violations: list  # (s, s_mid, s'', r_pair, r_mid) triples with the offending thresholds


def check_single_dipped(
    assignment: AssignmentMatrix,
    tol_mass: float = SUPPORT_TOL,
    tol_rank: float = 0.0,
) -> SingleDippedReport:
    """Strict single-dippedness: no type may sit strictly inside the span of a
    district with a strictly lower threshold (beyond ``tol_rank``)."""
    refined = refine_assignment(assignment, tol_mass)
    spans = [
        (d.threshold, *d.span) for d in refined.districts if d.types.size >= 2
    ]
    violations = []
    for d in refined.districts:
        for s_mid in d.types:
            for r, a, b in spans:
                if d.threshold > r + tol_rank and a + 1e-12 < s_mid < b - 1e-12:
                    violations.append((float(a), float(s_mid), float(b), float(r), float(d.threshold)))
    violations.sort()
    return SingleDippedReport(ok=not violations, violations=violations)


@dataclass(frozen=True)
class PackAndPairDecomposition:
    ok: bool
    reason: str | None
    bifurcation: float | None      # r^b: strongest packed district threshold
    pairs: list                    # (r, s1, s2, mass), sorted by (r, s2)
    segregated: list               # (r, mass) for packed districts
    seg_mass: np.ndarray
    pair_mass: np.ndarray
    type_grid: np.ndarray
    type_weights: np.ndarray


def decompose_pack_and_pair(
    assignment: AssignmentMatrix, tol_mass: float = SUPPORT_TOL
) -> PackAndPairDecomposition:
    """Read off the bifurcation point and the pairing maps s1 (nonincreasing)
    and s2 (nondecreasing) from a canonicalized solution."""
    refined = refine_assignment(assignment, tol_mass)

    def fail(reason: str) -> PackAndPairDecomposition:
        return PackAndPairDecomposition(
            ok=False, reason=reason, bifurcation=None, pairs=[], segregated=[],
            seg_mass=refined.seg_mass, pair_mass=refined.pair_mass,
            type_grid=assignment.type_grid, type_weights=assignment.type_weights,
        )

    if not refined.ok:
        return fail(f"re-matching left {refined.leftover:.2e} unplaced pooled mass")

    thr_grid = assignment.threshold_grid
    step = float(np.min(np.diff(thr_grid))) if thr_grid.size > 1 else 0.0
    pairs = []
    segregated = []
    for d in refined.districts:
        if d.packed:
            segregated.append((d.threshold, d.mass))
        elif d.types.size == 1:  # degenerate pool member at its own threshold
            pairs.append((d.threshold, float(d.types[0]), float(d.types[0]), d.mass))
        elif d.types.size == 2:
            s1, s2 = float(d.types[0]), float(d.types[1])
            if not (s1 < d.threshold < s2):
                return fail(f"pair ({s1}, {s2}) does not straddle its threshold {d.threshold}")
            pairs.append((d.threshold, s1, s2, d.mass))
        else:
            return fail(f"district at threshold {d.threshold} has {d.types.size} > 2 support types")

    # Bifurcation: the largest grid threshold at or below which every district
    # is degenerate.  With no pairs that is the top of the grid.
    if pairs:
        r_min_pair = min(r for r, *_ in pairs)
        below = thr_grid[thr_grid < r_min_pair - 1e-12]
        r_b = float(below[-1]) if below.size else float(thr_grid[0]) - step
    else:
        r_b = float(thr_grid[-1])
    if not pairs and not segregated:
        return fail("empty assignment")

    slack = step + 1e-9
    for r, m in segregated:
        if r > r_b + 1e-12:
            return fail(f"packed district at {r} lies above the bifurcation point {r_b}")
    pairs.sort(key=lambda p: (p[0], p[2]))
    # Monotone pairing maps: across distinct thresholds the stronger column's
    # pairs must nest outside the weaker column's (within one grid step).
    by_r: dict = {}
    for r, s1, s2, _ in pairs:
        lo1, hi2 = by_r.get(r, (np.inf, -np.inf))
        by_r[r] = (min(lo1, s1), max(hi2, s2))
    cols = sorted(by_r)
    for ra, rb_ in zip(cols, cols[1:]):
        a1, a2 = by_r[ra]
        b1, b2 = by_r[rb_]
        if b1 > a1 + slack or b2 < a2 - slack:
            return fail("pairing maps are not monotone in the threshold")
    return PackAndPairDecomposition(
        ok=True, reason=None, bifurcation=float(r_b), pairs=pairs, segregated=sorted(segregated),
        seg_mass=refined.seg_mass, pair_mass=refined.pair_mass,
        type_grid=assignment.type_grid, type_weights=assignment.type_weights,
    )


def classify_regime(
    decomp: PackAndPairDecomposition,
    assignment: AssignmentMatrix | None = None,
    split_frac: float = 0.01,
) -> RegimeLabel:
    """Label the solved plan.

    A type is segregated / paired if at least (1 - split_frac) of its mass is;
    otherwise it splits.  Grid discretization forces at most one split type at
    each edge of the segregated block (the continuum boundary falls between
    grid points), so such edge-adjacent splits are excused.  Any other split,
    or a non-contiguous segregated block, marks the mixed (Y) regimes.  POP
    segregates a bottom interval; PMP segregates an interior interval and
    pairs both tails.
    """
    if not decomp.ok:
        return RegimeLabel.NOT_PACK_AND_PAIR

    f = decomp.type_weights
    live = np.flatnonzero(f > 0)
    status = []
    for i in live:
        seg, pair = decomp.seg_mass[i], decomp.pair_mass[i]
        if pair <= split_frac * f[i]:
            status.append("seg")
        elif seg <= split_frac * f[i]:
            status.append("pair")
        else:
            status.append("split")

    n = len(status)
    n_seg = status.count("seg")
    if n_seg == n:
        return RegimeLabel.SEGREGATION
    if n_seg == 0 and "split" not in status:
        return RegimeLabel.NEGATIVE_ASSORTATIVE

    seg_idx = [k for k, st in enumerate(status) if st == "seg"]
    split_idx = [k for k, st in enumerate(status) if st == "split"]
    pure = False
    if seg_idx:
        a, b = seg_idx[0], seg_idx[-1]
        contiguous = seg_idx == list(range(a, b + 1))
        edge_ok = all(k in (a - 1, b + 1) for k in split_idx)
        if contiguous and edge_ok:
            pure = True
            # fold the edge artifacts into the block
            a = min([a] + [k for k in split_idx if k == a - 1])
            b = max([b] + [k for k in split_idx if k == b + 1])

    if pure:
        if a == 0 and b < n - 1:
            return RegimeLabel.POP
        if 0 < a and b < n - 1:
            return RegimeLabel.PMP
        return RegimeLabel.OTHER_Y

    # mixed: family determined by the extreme low types
    first = next((st for st in status if st != "split"), None)
    if first == "seg":
        return RegimeLabel.MIXED_POP
    if first == "pair":
        return RegimeLabel.MIXED_PMP
    return RegimeLabel.OTHER_Y


@dataclass(frozen=True)
class DualSupportReport:
    part1_ok: bool
    worst_slack: float        # max over active (s,r) of (best value) - (achieved value)
    part2_ok: bool
    worst_multiplier_error: float
    part2_errors: list        # (r, lp_lambda, formula_lambda)


def check_dual_support_optimality(
    inst: ProblemInstance,
    assignment: AssignmentMatrix,
    cert: DualCertificate,
    tol_support: float = 1e-6,
    tol_multiplier: float = 1e-6,
    tol_mass: float = SUPPORT_TOL,
) -> DualSupportReport:
    """Verify the optimality certificate on the active support.

    Part 1: every active cell (s, r) attains max_r' G(r') + lambda(r')(v(s,r')-1/2).
    Part 2: on each active column, lambda(r) = g(r) / integral of q(s - r) dP(s)
    (the continuum multiplier formula; for a packed column this is g(s)/q(0)).
    """
    g_of_r = np.asarray(inst.G(assignment.threshold_grid), dtype=float)
    values = cert.support_values(g_of_r, assignment.vote)
    best = values.max(axis=1)
    active = assignment.pi > tol_mass
    slack = np.where(active, best[:, None] - values, 0.0)
    worst1 = float(slack.max())

    col_mass = assignment.column_mass()
    errors = []
    worst2 = 0.0
    for j in np.flatnonzero(col_mass > tol_mass):
        w = assignment.pi[:, j]
        w = w / w.sum()
        denom = float(w @ inst.taste.pdf(assignment.type_grid - assignment.threshold_grid[j]))
        lam_formula = float(inst.g(assignment.threshold_grid[j])) / denom
        err = abs(lam_formula - float(cert.lambda_[j]))
        worst2 = max(worst2, err)
        if err > tol_multiplier:
            errors.append((float(assignment.threshold_grid[j]), float(cert.lambda_[j]), lam_formula))
    return DualSupportReport(
        part1_ok=worst1 <= tol_support,
        worst_slack=worst1,
        part2_ok=worst2 <= tol_multiplier,
        worst_multiplier_error=worst2,
        part2_errors=errors,
    )


def default_pap_grid(step: float = 0.1, lo: float = -5.0, hi: float = 5.0) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def check_pap_condition(
    gamma: float,
    grid: np.ndarray | None = None,
    step: float = 0.1,
    taste: TasteDistribution = NORMAL,
    margin: float = 1e-12,
) -> list:
    """Scan all grid quadruples s < r < s' <= s'' for the pack-and-pair
    sufficient condition; an empty list certifies pack-and-pair optimality.

    A quadruple violates iff both hold, with lambda(r) the paired-district
    multiplier and lambda(s'') = g(s'')/q(0):
        G(r) + lambda(r)(Q(s-r) - 1/2) >= G(s)
        G(r) + lambda(r)(Q(s-r) - 1/2) >= G(s'') + lambda(s'')(Q(s-s'') - 1/2)

    Both inequalities must clear ``margin``: deep in the distribution tails
    the two sides saturate to 1.0 in double precision and tie exactly, while
    in exact arithmetic the second inequality fails by ~1e-18 there.
    """
    if gamma <= 0:
        raise GerryOptError("gamma must be positive")
    x = default_pap_grid(step) if grid is None else np.asarray(grid, dtype=float)
    n = x.size
    Q = lambda z: np.asarray(taste.cdf(z), dtype=float)
    q = lambda z: np.asarray(taste.pdf(z), dtype=float)
    G = lambda z: np.asarray(taste.cdf(gamma * np.asarray(z, dtype=float)), dtype=float)
    g = lambda z: gamma * q(gamma * np.asarray(z, dtype=float))
    q0 = float(q(0.0))

    G_all = G(x)
    g_all = g(x)
    violations = []
    for i_s in range(n - 2):
        s = x[i_s]
        # packed-alternative values G(s'') + g(s'')/q(0) * (Q(s - s'') - 1/2), all s''
        alt = G_all + (g_all / q0) * (Q(s - x) - 0.5)
        # suffix minimum over s'' >= s'
        suffix_min = np.minimum.accumulate(alt[::-1])[::-1]
        suffix_arg = np.empty(n, dtype=int)
        best = n - 1
        for k in range(n - 1, -1, -1):
            if alt[k] <= alt[best]:
                best = k
            suffix_arg[k] = best
        for i_r in range(i_s + 1, n - 1):
            r = x[i_r]
            sp = x[i_r + 1 :]
            qs = float(q(s - r))
            Qs = float(Q(s - r))
            Qsp = Q(sp - r)
            denom = (Qsp - 0.5) * qs - (Qs - 0.5) * q(sp - r)
            lam = float(g_all[i_r]) * (Qsp - Qs) / denom
            lhs = float(G_all[i_r]) + lam * (Qs - 0.5)
            cond1 = lhs - float(G_all[i_s]) > margin
            cond2 = lhs - suffix_min[i_r + 1 :] > margin
            bad = np.flatnonzero(cond1 & cond2)
            for k in bad:
                i_sp = i_r + 1 + int(k)
                violations.append((float(s), float(r), float(x[i_sp]), float(x[suffix_arg[i_sp]])))
    violations.sort()
    return violations


@dataclass(frozen=True)
class YConditions:
    r_b_required: float
    beta1: float
    beta2: float
    admissible: bool


def y_necessary_conditions(gamma: float) -> YConditions:
    """Closed-form necessary conditions for mixed (Y) districting.

    The bifurcation point must be 0, and with beta1 = 3 gamma^2 / (2(gamma^2 - 1))
    and beta2 = gamma^2 / 2 the plan is admissible iff gamma > 1 and
    beta1 >= beta2 + 1, i.e. gamma in (1, sqrt(1 + sqrt(3))].
    """
    if gamma <= 0:
        raise GerryOptError("gamma must be positive")
    if gamma == 1.0:
        raise GerryOptError("gamma = 1 is degenerate: the limit slopes coincide")
    g2 = gamma * gamma
    beta1 = 3.0 * g2 / (2.0 * (g2 - 1.0))
    beta2 = g2 / 2.0
    admissible = gamma > 1.0 and beta1 - (beta2 + 1.0) >= -1e-12
    return YConditions(r_b_required=0.0, beta1=beta1, beta2=beta2, admissible=admissible)


@dataclass(frozen=True)
class SegNadReport:
    n_pool_preferred: int
    n_split_preferred: int
    pool_triples: list
    split_triples: list

    @property
    def mixed(self) -> bool:
        return self.n_pool_preferred > 0 and self.n_split_preferred > 0


def check_seg_nad_conditions(inst: ProblemInstance, triples=None, max_triples: int = 500) -> SegNadReport:
    """For sampled s < r < s', compare pooling the pair {s, s'} at threshold r
    against splitting into packed districts: pooling wins iff
    G(r) > rho G(s) + (1 - rho) G(s') with rho the balancing weight on s."""
    if triples is None:
        grid = inst.type_grid
        stride = max(1, grid.size // 12)
        pts = grid[::stride]
        triples = [
            (float(a), float(b), float(c))
            for a in pts
            for b in pts
            for c in pts
            if a < b < c
        ][:max_triples]
    pool, split = [], []
    for s, r, sp in triples:
        num = float(inst.taste.cdf(sp - r)) - 0.5
        den = float(inst.taste.cdf(sp - r)) - float(inst.taste.cdf(s - r))
        rho = num / den
        pooled = float(inst.G(r))
        separated = rho * float(inst.G(s)) + (1.0 - rho) * float(inst.G(sp))
        (pool if pooled > separated else split).append((s, r, sp))
    return SegNadReport(
        n_pool_preferred=len(pool),
        n_split_preferred=len(split),
        pool_triples=pool,
        split_triples=split,
    )
