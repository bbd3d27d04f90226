"""Distributional policy goals, discrete-convexity checkers, and implied bounds.

The exchange checks treat a distribution as a flat integer vector indexed
school-major by (school, type).  For speed, members of a candidate set are
also packed into single integers (one bit field per coordinate) so that a
single exchange is one addition and membership is one set lookup.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import InfeasibleConstraints, UniverseTooLarge
from .model import Distribution, Problem

DEFAULT_XI0_BUDGET = 10**7
DEFAULT_PAIR_BUDGET = 10**8


class GoalForm(Enum):
    EXPLICIT_SET = "explicit_set"
    BALANCED_EXCHANGE = "balanced_exchange"
    SCHOOL_DIVERSITY = "school_diversity"
    COMBINATION = "combination"
    F_LAMBDA = "f_lambda"
    DISTRICT_CEILINGS = "district_ceilings"


@dataclass(frozen=True)
class PolicyFunction:
    """A total score on distributions; higher means more acceptable."""

    kind: str  # manhattan_ideal | indicator | table
    ideal: Optional[Distribution] = None
    members: Optional[frozenset] = None
    table: tuple = ()

    def __call__(self, xi: Distribution) -> Fraction:
        if self.kind == "manhattan_ideal":
            return -Fraction(
                sum(
                    abs(a - b)
                    for ra, rb in zip(xi.counts, self.ideal.counts)
                    for a, b in zip(ra, rb)
                )
            )
        if self.kind == "indicator":
            return Fraction(1 if xi in self.members else 0)
        for key, value in self.table:
            if key == xi:
                return value
        raise KeyError(f"policy function table has no value for {xi}")


@dataclass(frozen=True)
class PolicyGoal:
    """A set of acceptable distributions, in one of several declarative forms.

    District-level ceilings are allowed only to demonstrate where they break
    the guarantees; ``warning`` flags such goals.
    """

    form: GoalForm
    explicit: frozenset = frozenset()
    floors: tuple = ()  # of ((school, type), count)
    ceilings: tuple = ()  # of ((school, type), count)
    district_ceilings: tuple = ()  # of ((district, type), count)
    fn: Optional[PolicyFunction] = None
    threshold: Optional[Fraction] = None
    intersect_xi0: bool = False

    @property
    def warning(self) -> bool:
        return self.form is GoalForm.DISTRICT_CEILINGS

    def floor(self, school, type_):
        for (c, t), p in self.floors:
            if c == school and t == type_:
                return p
        return 0

    def ceiling(self, school, type_):
        for (c, t), q in self.ceilings:
            if c == school and t == type_:
                return q
        return None

    def district_ceiling(self, district, type_):
        for (d, t), q in self.district_ceilings:
            if d == district and t == type_:
                return q
        return None


def balanced_exchange_goal() -> PolicyGoal:
    return PolicyGoal(form=GoalForm.BALANCED_EXCHANGE)


def school_diversity_goal(floors=None, ceilings=None) -> PolicyGoal:
    floors = tuple(sorted((floors or {}).items()))
    ceilings = tuple(sorted((ceilings or {}).items()))
    for (c, t), p in floors:
        q = dict(ceilings).get((c, t))
        if p < 0 or (q is not None and p > q):
            raise ValueError(f"floor/ceiling order violated at school {c}, type {t}")
    return PolicyGoal(form=GoalForm.SCHOOL_DIVERSITY, floors=floors, ceilings=ceilings)


def combination_goal(floors=None, ceilings=None) -> PolicyGoal:
    base = school_diversity_goal(floors, ceilings)
    return PolicyGoal(
        form=GoalForm.COMBINATION, floors=base.floors, ceilings=base.ceilings
    )


def district_ceilings_goal(ceilings) -> PolicyGoal:
    return PolicyGoal(
        form=GoalForm.DISTRICT_CEILINGS,
        district_ceilings=tuple(sorted(ceilings.items())),
    )


def explicit_goal(distributions) -> PolicyGoal:
    return PolicyGoal(form=GoalForm.EXPLICIT_SET, explicit=frozenset(distributions))


def f_lambda_goal(fn: PolicyFunction, threshold) -> PolicyGoal:
    return PolicyGoal(
        form=GoalForm.F_LAMBDA, fn=fn, threshold=Fraction(threshold)
    )


def in_xi0(xi: Distribution, problem: Problem) -> bool:
    """Everyone matched, no school over capacity."""
    if xi.total() != problem.num_students:
        return False
    return all(
        xi.school_total(c) <= problem.capacities[c] for c in range(problem.num_schools)
    )


def contains(goal: PolicyGoal, xi: Distribution, problem: Problem) -> bool:
    """Membership of a distribution in the goal's set."""
    if goal.intersect_xi0 and not in_xi0(xi, problem):
        return False
    if goal.form is GoalForm.EXPLICIT_SET:
        return xi in goal.explicit
    if goal.form is GoalForm.BALANCED_EXCHANGE:
        return all(
            xi.district_total(problem, d) == problem.k_district[d]
            for d in range(problem.num_districts)
        )
    if goal.form is GoalForm.SCHOOL_DIVERSITY:
        return _within_box(goal, xi, problem)
    if goal.form is GoalForm.COMBINATION:
        return _within_box(goal, xi, problem) and all(
            xi.district_total(problem, d) == problem.k_district[d]
            for d in range(problem.num_districts)
        )
    if goal.form is GoalForm.F_LAMBDA:
        return goal.fn(xi) >= goal.threshold
    if goal.form is GoalForm.DISTRICT_CEILINGS:
        for (d, t), q in goal.district_ceilings:
            if xi.district_type(problem, d, t) > q:
                return False
        return all(
            xi.school_total(c) <= problem.capacities[c]
            for c in range(problem.num_schools)
        )
    raise ValueError(goal.form)


def _within_box(goal, xi, problem):
    for c in range(problem.num_schools):
        for t in range(problem.num_types):
            v = xi.school_type(c, t)
            if v < goal.floor(c, t):
                return False
            q = goal.ceiling(c, t)
            if q is not None and v > q:
                return False
    return True


def satisfies_with_feasibility(goal: PolicyGoal, xi: Distribution, problem) -> bool:
    """Goal membership together with the everyone-matched capacity set.

    Trading mechanics keep the total constant, so intersecting adds exactly
    the school-capacity requirement.
    """
    return in_xi0(xi, problem) and contains(goal, xi, problem)


# -- enumeration -------------------------------------------------------------------


def enumerate_xi0(problem: Problem, budget: int = DEFAULT_XI0_BUDGET):
    """All distributions matching every student within school capacities,
    in lexicographic order of the school-major flat vector."""
    total = problem.num_students
    size = 1
    for c in range(problem.num_schools):
        size *= (min(problem.capacities[c], total) + 1) ** problem.num_types
        if size > budget:
            raise UniverseTooLarge(size, budget)

    schools = list(range(problem.num_schools))
    suffix_cap = [0] * (len(schools) + 1)
    for i in reversed(schools):
        suffix_cap[i] = suffix_cap[i + 1] + problem.capacities[i]

    out = []
    row = []

    def school_rows(c, need):
        cap = min(problem.capacities[c], need)
        for combo in _typed_rows(cap, problem.num_types):
            yield combo

    def rec(c, used):
        if c == len(schools):
            if used == total:
                out.append(Distribution(tuple(row)))
            return
        if used + suffix_cap[c] < total:
            return
        for r in school_rows(c, total - used):
            row.append(r)
            rec(c + 1, used + sum(r))
            row.pop()

    rec(0, 0)
    return out


def _typed_rows(cap, num_types):
    """All type splits with total at most cap, lexicographic."""
    if num_types == 1:
        return [(k,) for k in range(cap + 1)]
    rows = []
    for head in range(cap + 1):
        for tail in _typed_rows(cap - head, num_types - 1):
            rows.append((head,) + tail)
    return rows


def policy_members(goal: PolicyGoal, problem: Problem, budget=DEFAULT_XI0_BUDGET):
    """The goal's set intersected with the everyone-matched capacity set."""
    return [xi for xi in enumerate_xi0(problem, budget) if contains(goal, xi, problem)]


# -- M-convexity -------------------------------------------------------------------


@dataclass(frozen=True)
class MConvexVerdict:
    holds: bool
    witness: tuple = ()  # (xi, xi_tilde, (school, type)) when it fails

    def __bool__(self):
        return self.holds


class _PackedSet:
    """Distributions packed into bit-field integers for O(1) exchange tests."""

    def __init__(self, members: Iterable[Distribution]):
        self.members = list(members)
        if not self.members:
            self.coords = 0
            return
        first = self.members[0]
        self.num_schools = len(first.counts)
        self.num_types = len(first.counts[0])
        self.coords = self.num_schools * self.num_types
        max_entry = max(v for xi in self.members for row in xi.counts for v in row)
        self.shift = max(2, (max_entry + 2).bit_length())
        self.place = [1 << (self.shift * k) for k in range(self.coords)]
        self.flats = [xi.flat() for xi in self.members]
        self.codes = [self._pack(f) for f in self.flats]
        self.codeset = set(self.codes)

    def _pack(self, flat):
        code = 0
        for k, v in enumerate(flat):
            code |= v << (self.shift * k)
        return code

    def coord(self, k):
        return divmod(k, self.num_types)  # (school, type)


def is_mconvex(
    members, pair_budget: int = DEFAULT_PAIR_BUDGET
) -> MConvexVerdict:
    """Exhaustive exchange-property check of a finite set of distributions.

    Fails with the first witness in scan order: first distribution pair in
    member order, then surplus coordinates type-major (all schools for one
    type before the next type).
    """
    members = list(members)
    n = len(members)
    if n <= 1:
        return MConvexVerdict(True)
    packed = _PackedSet(members)
    k = packed.coords
    if n * n * k > pair_budget:
        raise UniverseTooLarge(n * n * k, pair_budget)

    D = np.array(packed.flats, dtype=np.int64)
    pow2 = (1 << np.arange(k, dtype=np.int64)).astype(np.int64)

    # Single-exchange feasibility bitmasks:
    #   R[m, i] has bit j set when member m minus coord i plus coord j stays in.
    #   T[m, i] has bit j set when member m plus coord i minus coord j stays in.
    codes = packed.codes
    codeset = packed.codeset
    place = packed.place
    R = np.zeros((n, k), dtype=np.int64)
    T = np.zeros((n, k), dtype=np.int64)
    for m in range(n):
        flat = packed.flats[m]
        code = codes[m]
        for i in range(k):
            r_bits = 0
            t_bits = 0
            ci = code + place[i]
            for j in range(k):
                if j == i:
                    continue
                if flat[i] > 0 and (code - place[i] + place[j]) in codeset:
                    r_bits |= 1 << j
                if flat[j] > 0 and (ci - place[j]) in codeset:
                    t_bits |= 1 << j
            R[m, i] = r_bits
            T[m, i] = t_bits

    # type-major coordinate scan: coordinate k = school * num_types + type
    scan = sorted(range(k), key=lambda kk: (kk % packed.num_types, kk // packed.num_types))

    for a in range(n):
        diffs = D - D[a]  # diffs[b, j] = member_b[j] - member_a[j]
        defm = ((diffs > 0).astype(np.int64) * pow2).sum(axis=1)
        surplus = diffs < 0  # coords where member_a exceeds member_b
        for i in scan:
            rows = surplus[:, i]
            if not rows.any():
                continue
            ok = (int(R[a, i]) & T[:, i] & defm) != 0
            viol = rows & ~ok
            if viol.any():
                b = int(np.argmax(viol))
                return MConvexVerdict(
                    False,
                    witness=(members[a], members[b], packed.coord(i)),
                )
    return MConvexVerdict(True)


def find_exchange_violation(members, xi: Distribution, xi_tilde: Distribution):
    """First surplus coordinate of (xi, xi_tilde) with no double-exchange
    partner inside ``members``; None when every coordinate has one.

    Coordinates are scanned type-major, mirroring the printed case analyses.
    """
    memberset = set(members)
    flat_a = xi.flat()
    flat_b = xi_tilde.flat()
    num_types = len(xi.counts[0])
    k = len(flat_a)
    scan = sorted(range(k), key=lambda kk: (kk % num_types, kk // num_types))
    for i in scan:
        if flat_a[i] <= flat_b[i]:
            continue
        found = False
        for j in range(k):
            if flat_a[j] >= flat_b[j]:
                continue
            ci, ti = divmod(i, num_types)
            cj, tj = divmod(j, num_types)
            if (
                xi.add(ci, ti, -1).add(cj, tj, +1) in memberset
                and xi_tilde.add(ci, ti, +1).add(cj, tj, -1) in memberset
            ):
                found = True
                break
        if not found:
            return divmod(i, num_types)
    return None


def is_mconvex_reference(members) -> MConvexVerdict:
    """Direct quadratic implementation used to cross-check the fast path."""
    members = list(members)
    for a in members:
        for b in members:
            if a == b:
                continue
            coord = find_exchange_violation(members, a, b)
            if coord is not None:
                return MConvexVerdict(False, witness=(a, b, coord))
    return MConvexVerdict(True)


# -- pseudo M-concavity ------------------------------------------------------------


@dataclass(frozen=True)
class ConcavityVerdict:
    holds: bool
    witness: tuple = ()  # violating (xi, xi_tilde)

    def __bool__(self):
        return self.holds


def _flat_evaluator(fn, num_types):
    """A fast f-on-flat-vectors adapter for the built-in function kinds."""
    if isinstance(fn, PolicyFunction):
        if fn.kind == "manhattan_ideal":
            ideal = fn.ideal.flat()
            return lambda flat: -Fraction(
                sum(abs(a - b) for a, b in zip(flat, ideal))
            )
        if fn.kind == "indicator":
            members = {xi.flat() for xi in fn.members}
            return lambda flat: Fraction(1 if flat in members else 0)

    def call(flat):
        rows = tuple(
            flat[i : i + num_types] for i in range(0, len(flat), num_types)
        )
        return fn(Distribution(rows))

    return call


def is_pseudo_mconcave(
    fn: Callable[[Distribution], Fraction],
    problem: Problem,
    budget: int = DEFAULT_XI0_BUDGET,
) -> ConcavityVerdict:
    """Check the min-of-pair exchange inequality over every distinct pair of
    everyone-matched capacity-feasible distributions."""
    domain = enumerate_xi0(problem, budget)
    value_at = _flat_evaluator(fn, problem.num_types)
    flats = [xi.flat() for xi in domain]
    values = [value_at(f) for f in flats]
    k = problem.num_schools * problem.num_types
    cache = {}

    def exchanged(flat, i, j):
        got = cache.get((flat, i, j))
        if got is None:
            v = list(flat)
            v[i] -= 1
            v[j] += 1
            got = value_at(tuple(v))
            cache[(flat, i, j)] = got
        return got

    n = len(domain)
    for ia in range(n):
        flat_a = flats[ia]
        fa = values[ia]
        for ib in range(n):
            if ia == ib:
                continue
            flat_b = flats[ib]
            floor = min(fa, values[ib])
            ok = False
            for i in range(k):
                if flat_a[i] <= flat_b[i]:
                    continue
                for j in range(k):
                    if flat_a[j] >= flat_b[j]:
                        continue
                    if (
                        exchanged(flat_a, i, j) >= floor
                        and exchanged(flat_b, j, i) >= floor
                    ):
                        ok = True
                        break
                if ok:
                    break
            if not ok:
                return ConcavityVerdict(False, witness=(domain[ia], domain[ib]))
    return ConcavityVerdict(True)


def upper_contour(
    fn: Callable[[Distribution], Fraction],
    threshold,
    problem: Problem,
    budget: int = DEFAULT_XI0_BUDGET,
):
    """Distributions in the everyone-matched capacity set scoring at least
    ``threshold``."""
    threshold = Fraction(threshold)
    return [xi for xi in enumerate_xi0(problem, budget) if fn(xi) >= threshold]


def indicator_of(members, problem: Problem) -> PolicyFunction:
    """The 0/1 score of membership in ``members`` within the everyone-matched
    capacity set; its level set at 1 reproduces that intersection exactly."""
    inside = frozenset(xi for xi in members if in_xi0(xi, problem))
    return PolicyFunction(kind="indicator", members=inside)


def manhattan_ideal(ideal: Distribution, problem: Problem) -> PolicyFunction:
    """Negative Manhattan distance to an ideal distribution.

    The ideal must itself match everyone within capacities.
    """
    if not in_xi0(ideal, problem):
        raise ValueError("ideal distribution must match every student within capacity")
    return PolicyFunction(kind="manhattan_ideal", ideal=ideal)


# -- minimum-cost flow and implied bounds ------------------------------------------


class FlowNetwork:
    """Integer min-cost max-flow with successive shortest augmenting paths.

    Arcs store (capacity, cost); costs may be negative, so path search is
    Bellman-Ford on the residual network.  All quantities stay integers.
    """

    def __init__(self, num_nodes: int):
        self.num_nodes = num_nodes
        self.head = [[] for _ in range(num_nodes)]  # node -> arc indices
        self.to = []
        self.cap = []
        self.cost = []

    def add_arc(self, u: int, v: int, capacity: int, cost: int = 0):
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(capacity)
        self.cost.append(cost)
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0)
        self.cost.append(-cost)
        return len(self.to) - 2

    def min_cost_max_flow(self, source: int, sink: int):
        flow = 0
        total_cost = 0
        INF = float("inf")
        while True:
            dist = [INF] * self.num_nodes
            in_queue = [False] * self.num_nodes
            prev_arc = [-1] * self.num_nodes
            dist[source] = 0
            queue = [source]
            in_queue[source] = True
            while queue:
                u = queue.pop(0)
                in_queue[u] = False
                for a in self.head[u]:
                    if self.cap[a] > 0 and dist[u] + self.cost[a] < dist[self.to[a]]:
                        v = self.to[a]
                        dist[v] = dist[u] + self.cost[a]
                        prev_arc[v] = a
                        if not in_queue[v]:
                            queue.append(v)
                            in_queue[v] = True
            if dist[sink] == INF:
                return flow, total_cost
            push = INF
            v = sink
            while v != source:
                a = prev_arc[v]
                push = min(push, self.cap[a])
                v = self.to[a ^ 1]
            v = sink
            while v != source:
                a = prev_arc[v]
                self.cap[a] -= push
                self.cap[a ^ 1] += push
                v = self.to[a ^ 1]
            flow += push
            total_cost += push * dist[sink]

    def arc_flow(self, arc_index: int) -> int:
        return self.cap[arc_index ^ 1]


def _bounds_network(problem: Problem, ceilings, objective=None):
    """source -> district (k_d) -> school (q_c) -> type (school-type ceiling)
    -> sink (k^t); the optional objective puts costs on school->type arcs."""
    D, C, T = problem.num_districts, problem.num_schools, problem.num_types
    source = 0
    district0 = 1
    school0 = district0 + D
    type0 = school0 + C
    sink = type0 + T
    net = FlowNetwork(sink + 1)
    for d in range(D):
        net.add_arc(source, district0 + d, problem.k_district[d])
    school_type_arcs = {}
    for c in range(C):
        net.add_arc(district0 + problem.school_district[c], school0 + c,
                    problem.capacities[c])
        for t in range(T):
            q = ceilings.get((c, t))
            cap = problem.capacities[c] if q is None else min(q, problem.capacities[c])
            cost = objective(c, t) if objective else 0
            school_type_arcs[(c, t)] = net.add_arc(school0 + c, type0 + t, cap, cost)
    for t in range(T):
        net.add_arc(type0 + t, sink, problem.k_type[t])
    return net, source, sink, school_type_arcs


def implied_bounds(problem: Problem, ceilings) -> dict:
    """For each (district, type): the least and greatest count of that type
    the district can serve across all legitimate matchings.

    ``ceilings`` maps (school, type) to a cap; missing pairs are capped only
    by school capacity.  Solved as two min-cost flows per (district, type).
    Raises InfeasibleConstraints when no legitimate matching exists.
    """
    total = problem.num_students
    net, source, sink, _ = _bounds_network(problem, ceilings)
    flow, _ = net.min_cost_max_flow(source, sink)
    if flow < total:
        raise InfeasibleConstraints(
            f"constraint system routes only {flow} of {total} students"
        )

    out = {}
    for d in range(problem.num_districts):
        for t in range(problem.num_types):
            bounds = []
            for sign in (1, -1):
                def objective(c, tt, d=d, t=t, sign=sign):
                    return sign if (problem.school_district[c] == d and tt == t) else 0

                net, source, sink, arcs = _bounds_network(problem, ceilings, objective)
                flow, cost = net.min_cost_max_flow(source, sink)
                if flow < total:
                    raise InfeasibleConstraints("constraint system became infeasible")
                value = sum(
                    net.arc_flow(arcs[(c, t)])
                    for c in problem.district_schools[d]
                )
                bounds.append(value)
            out[(d, t)] = (bounds[0], bounds[1])
    return out


@dataclass(frozen=True)
class ConditionReport:
    deltas: tuple  # of ((type, district, other_district), Fraction)
    max_delta: Fraction
    alpha: Fraction
    satisfied: bool


def diversity_condition(problem: Problem, ceilings, alpha) -> ConditionReport:
    """The implied-bounds ratio test: for every type and ordered district
    pair, ceiling share minus floor share must not exceed alpha."""
    alpha = Fraction(alpha)
    bounds = implied_bounds(problem, ceilings)
    deltas = []
    for t in range(problem.num_types):
        for d in range(problem.num_districts):
            for d2 in range(problem.num_districts):
                if d == d2:
                    continue
                delta = Fraction(
                    bounds[(d, t)][1], problem.k_district[d]
                ) - Fraction(bounds[(d2, t)][0], problem.k_district[d2])
                deltas.append(((t, d, d2), delta))
    max_delta = max(v for _, v in deltas)
    return ConditionReport(
        deltas=tuple(deltas),
        max_delta=max_delta,
        alpha=alpha,
        satisfied=max_delta <= alpha,
    )


def legitimate_distributions(
    problem: Problem, ceilings, budget: int = DEFAULT_XI0_BUDGET
):
    """Brute-force ground truth for the flow bounds: everyone matched,
    district totals met, type totals met, school-type ceilings respected."""
    out = []
    for xi in enumerate_xi0(problem, budget):
        if any(
            xi.district_total(problem, d) != problem.k_district[d]
            for d in range(problem.num_districts)
        ):
            continue
        if any(
            sum(xi.school_type(c, t) for c in range(problem.num_schools))
            != problem.k_type[t]
            for t in range(problem.num_types)
        ):
            continue
        ok = True
        for (c, t), q in ceilings.items():
            if xi.school_type(c, t) > q:
                ok = False
                break
        if ok:
            out.append(xi)
    return out
