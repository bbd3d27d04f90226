"""Student-proposing deferred acceptance over district choice functions.

Proposals are simultaneous within a step; districts keep their tentative
set from the previous step plus the new proposals and choose from the
union.  The run terminates at the first step with no rejection.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .errors import RuleViolation
from .model import Contract, Matching, Problem, distribution_of
from .rules import choose


@dataclass(frozen=True)
class SpdaStep:
    proposals: tuple  # of (district, frozenset of contracts proposed this step)
    tentative: Matching
    rejected: Matching


@dataclass(frozen=True)
class SpdaTrace:
    steps: tuple
    outcome: Matching

    @property
    def num_steps(self):
        return len(self.steps)


def run_spda(problem: Problem, rules) -> SpdaTrace:
    """Run deferred acceptance; ``rules`` maps district index -> RuleSpec."""
    for d in range(problem.num_districts):
        if d not in rules:
            raise RuleViolation(f"district {problem.district_ids[d]} has no rule")

    next_choice = [0] * problem.num_students  # pointer into preference lists
    proposing = set(range(problem.num_students))
    held = {d: frozenset() for d in range(problem.num_districts)}
    steps = []
    guard = problem.num_students * problem.num_schools + 1

    while True:
        if len(steps) > guard:
            raise RuleViolation(
                "no convergence; a rule is re-rejecting held contracts",
                trace=SpdaTrace(tuple(steps), frozenset()),
            )
        new_proposals = {d: set() for d in range(problem.num_districts)}
        for s in sorted(proposing):
            if next_choice[s] >= problem.num_schools:
                continue  # preference list exhausted; student stays unmatched
            c = problem.preferences[s][next_choice[s]]
            x = problem.contract(s, c)
            new_proposals[x.district].add(x)

        tentative = {}
        rejected = set()
        for d in range(problem.num_districts):
            pool = held[d] | new_proposals[d]
            chosen = choose(rules[d], pool, problem)
            if not chosen <= pool:
                raise RuleViolation(
                    f"rule for {problem.district_ids[d]} chose outside its input"
                )
            tentative[d] = chosen
            rejected |= pool - chosen

        steps.append(
            SpdaStep(
                proposals=tuple(
                    (d, frozenset(new_proposals[d]))
                    for d in range(problem.num_districts)
                ),
                tentative=frozenset().union(*tentative.values()),
                rejected=frozenset(rejected),
            )
        )
        held = tentative

        if not rejected:
            break
        proposing = set()
        for x in rejected:
            next_choice[x.student] += 1
            proposing.add(x.student)

    outcome = frozenset().union(*held.values())
    return SpdaTrace(tuple(steps), outcome)


def run_intradistrict_spda(problem: Problem, rules) -> Matching:
    """Run deferred acceptance separately inside each district.

    Each student proposes only to her home district's schools, in the
    relative order of her full preference list.
    """
    outcome = set()
    for d in range(problem.num_districts):
        students = problem.students_by_district(d)
        schools = set(problem.district_schools[d])
        next_idx = {s: 0 for s in students}
        restricted = {
            s: [c for c in problem.preferences[s] if c in schools] for s in students
        }
        proposing = set(students)
        held = frozenset()
        guard = len(students) * len(schools) + 2
        step = 0
        while True:
            step += 1
            if step > guard:
                raise RuleViolation(
                    f"intra-district run for {problem.district_ids[d]} did not settle"
                )
            proposals = set()
            for s in sorted(proposing):
                if next_idx[s] >= len(restricted[s]):
                    continue
                proposals.add(problem.contract(s, restricted[s][next_idx[s]]))
            pool = held | proposals
            chosen = choose(rules[d], pool, problem)
            rejected = pool - chosen
            held = chosen
            if not rejected:
                break
            proposing = set()
            for x in rejected:
                next_idx[x.student] += 1
                proposing.add(x.student)
        outcome |= held
    return frozenset(outcome)


@dataclass(frozen=True)
class StabilityVerdict:
    holds: bool
    blocking_contract: Optional[Contract] = None
    shrinking_district: Optional[int] = None

    def __bool__(self):
        return self.holds


def is_stable(X: Matching, problem: Problem, rules) -> StabilityVerdict:
    """Stability: districts keep what they hold and no student-district
    pair blocks through an unchosen contract."""
    by_district = {d: frozenset() for d in range(problem.num_districts)}
    for x in X:
        by_district[x.district] |= {x}
    for d in range(problem.num_districts):
        if choose(rules[d], by_district[d], problem) != by_district[d]:
            return StabilityVerdict(False, shrinking_district=d)
    for s in range(problem.num_students):
        current = problem.outcome_school(X, s)
        for c in problem.preferences[s]:
            if current is not None and problem.rank[s][c] >= problem.rank[s][current]:
                break  # schools below the current outcome cannot block
            x = problem.contract(s, c)
            if x in X:
                continue
            d = x.district
            if x in choose(rules[d], by_district[d] | {x}, problem):
                return StabilityVerdict(False, blocking_contract=x)
    return StabilityVerdict(True)


@dataclass(frozen=True)
class Verdict:
    holds: bool
    witness: tuple = ()

    def __bool__(self):
        return self.holds


def check_individual_rationality(X: Matching, problem: Problem) -> Verdict:
    """Every student weakly prefers her outcome to her initial school."""
    worst = None
    worst_drop = 0
    for s in range(problem.num_students):
        drop = problem.rank_of(s, problem.outcome_school(X, s)) - problem.rank_of(
            s, problem.initial_school[s]
        )
        if drop > worst_drop:
            worst_drop = drop
            worst = s
    if worst is None:
        return Verdict(True)
    return Verdict(False, (worst,))


def check_balanced_exchange(X: Matching, problem: Problem) -> Verdict:
    """Each district serves exactly as many students as it is home to."""
    loads = [0] * problem.num_districts
    for x in X:
        loads[x.district] += 1
    for d in range(problem.num_districts):
        if loads[d] != problem.k_district[d]:
            return Verdict(False, (d, loads[d], problem.k_district[d]))
    return Verdict(True)


def type_ratio_gaps(X: Matching, problem: Problem) -> dict:
    """Per type, the largest difference of type shares across district pairs.

    Districts with no resident students have no defined share and are
    skipped.
    """
    xi = distribution_of(X, problem)
    populated = [d for d in range(problem.num_districts) if problem.k_district[d] > 0]
    gaps = {}
    for t in range(problem.num_types):
        best = Fraction(0)
        for d in populated:
            for d2 in populated:
                if d == d2:
                    continue
                diff = Fraction(
                    xi.district_type(problem, d, t), problem.k_district[d]
                ) - Fraction(xi.district_type(problem, d2, t), problem.k_district[d2])
                if diff > best:
                    best = diff
        gaps[t] = best
    return gaps


def alpha_diversity_gap(X: Matching, problem: Problem) -> Fraction:
    """Max over types and ordered district pairs of the type-share gap."""
    gaps = type_ratio_gaps(X, problem)
    return max(gaps.values()) if gaps else Fraction(0)
