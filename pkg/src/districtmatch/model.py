"""Core market model: problems, contracts, matchings, and distributions.

All identifiers coming from instance files are opaque strings.  Validation
assigns each entity an index in file order, and every algorithm in the
package works on those indices, so runs are byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .errors import ValidationError


class Contract(NamedTuple):
    """A (student, district, school) triple; the district is d(school)."""

    student: int
    district: int
    school: int


Matching = frozenset  # of Contract


@dataclass(frozen=True)
class ProblemSpec:
    """Raw, id-based description of a market, as read from an instance file."""

    types: tuple
    districts: tuple
    schools: tuple  # of (school_id, district_id, capacity)
    students: tuple  # of (student_id, district_id, type_id, preference list)
    initial_matching: dict  # student_id -> school_id


@dataclass(frozen=True)
class Problem:
    """A validated, immutable market instance.

    Index-based fields are aligned with the id tuples; ``k_district`` and
    ``k_type`` are the per-home-district and per-type student counts, cached
    here because nearly every policy check needs them.
    """

    student_ids: tuple
    district_ids: tuple
    school_ids: tuple
    type_ids: tuple
    student_district: tuple  # home district index per student
    student_type: tuple  # type index per student
    preferences: tuple  # per student: tuple of school indices, best first
    school_district: tuple  # district index per school
    capacities: tuple  # per school
    initial_school: tuple  # per student
    k_district: tuple = field(default=())
    k_type: tuple = field(default=())
    district_schools: tuple = field(default=())
    rank: tuple = field(default=())  # rank[s][c] = position of c in s's list

    # -- convenience accessors -------------------------------------------------

    @property
    def num_students(self):
        return len(self.student_ids)

    @property
    def num_schools(self):
        return len(self.school_ids)

    @property
    def num_districts(self):
        return len(self.district_ids)

    @property
    def num_types(self):
        return len(self.type_ids)

    def contract(self, student: int, school: int) -> Contract:
        return Contract(student, self.school_district[school], school)

    def all_contracts(self):
        """The full contract universe, student-major then school order."""
        return [
            self.contract(s, c)
            for s in range(self.num_students)
            for c in range(self.num_schools)
        ]

    def district_contracts(self, district: int):
        """Contracts associated with one district, student-major order."""
        return [
            self.contract(s, c)
            for s in range(self.num_students)
            for c in self.district_schools[district]
        ]

    def initial_matching(self) -> Matching:
        return frozenset(
            self.contract(s, self.initial_school[s]) for s in range(self.num_students)
        )

    def initial_contract(self, student: int) -> Contract:
        return self.contract(student, self.initial_school[student])

    def outcome_school(self, X: Matching, student: int) -> Optional[int]:
        """The school of ``student`` in ``X``, or None if unmatched."""
        for x in X:
            if x.student == student:
                return x.school
        return None

    def rank_of(self, student: int, school: Optional[int]) -> int:
        """Preference rank, 0 = best; being unmatched ranks strictly last."""
        if school is None:
            return self.num_schools
        return self.rank[student][school]

    def prefers(self, student: int, a: Optional[int], b: Optional[int]) -> bool:
        """Strict preference of school ``a`` over ``b`` for ``student``."""
        return self.rank_of(student, a) < self.rank_of(student, b)

    def students_by_district(self, district: int):
        return [
            s for s in range(self.num_students) if self.student_district[s] == district
        ]


@dataclass(frozen=True)
class Distribution:
    """School-by-type head counts; district counts are always derived."""

    counts: tuple  # counts[school][type]

    def school_type(self, school: int, type_: int) -> int:
        return self.counts[school][type_]

    def school_total(self, school: int) -> int:
        return sum(self.counts[school])

    def district_type(self, problem: Problem, district: int, type_: int) -> int:
        return sum(
            self.counts[c][type_] for c in problem.district_schools[district]
        )

    def district_total(self, problem: Problem, district: int) -> int:
        return sum(
            sum(self.counts[c]) for c in problem.district_schools[district]
        )

    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def add(self, school: int, type_: int, delta: int) -> "Distribution":
        rows = [list(row) for row in self.counts]
        rows[school][type_] += delta
        return Distribution(tuple(tuple(row) for row in rows))

    def flat(self):
        return tuple(v for row in self.counts for v in row)


def unit_distribution(problem: Problem, school: int, type_: int) -> Distribution:
    """One student of ``type_`` at ``school`` and nobody else."""
    rows = [[0] * problem.num_types for _ in range(problem.num_schools)]
    rows[school][type_] = 1
    return Distribution(tuple(tuple(row) for row in rows))


def zero_distribution(problem: Problem) -> Distribution:
    rows = [[0] * problem.num_types for _ in range(problem.num_schools)]
    return Distribution(tuple(tuple(row) for row in rows))


@dataclass(frozen=True)
class FeasibilityReport:
    feasible_for_students: bool
    within_capacity: bool
    duplicate_students: tuple = ()
    over_capacity_schools: tuple = ()

    @property
    def feasible(self):
        return self.feasible_for_students and self.within_capacity


# -- validation ------------------------------------------------------------------


def validate_problem(raw: ProblemSpec) -> Problem:
    """Check every structural invariant of ``raw`` and index it.

    Raises ValidationError listing all violations; the error codes are
    MissingDistrict, CapacityShortfall, InfeasibleInitialMatching,
    IncompletePreference and DanglingReference.
    """
    issues = []

    for label, ids in (
        ("district", raw.districts),
        ("type", raw.types),
        ("school", [c[0] for c in raw.schools]),
        ("student", [s[0] for s in raw.students]),
    ):
        seen = set()
        for i in ids:
            if i in seen:
                issues.append(("DanglingReference", f"duplicate {label} id {i!r}"))
            seen.add(i)
    if issues:
        raise ValidationError(issues)

    district_index = {d: i for i, d in enumerate(raw.districts)}
    type_index = {t: i for i, t in enumerate(raw.types)}
    school_index = {}
    school_district = []
    capacities = []
    for sid, did, cap in raw.schools:
        if did not in district_index:
            issues.append(
                ("DanglingReference", f"school {sid} references unknown district {did}")
            )
            continue
        school_index[sid] = len(school_index)
        school_district.append(district_index[did])
        capacities.append(int(cap))

    districts_with_schools = {d for d in school_district}
    if len(raw.districts) < 2 or any(
        i not in districts_with_schools for i in range(len(raw.districts))
    ):
        missing = [
            raw.districts[i]
            for i in range(len(raw.districts))
            if i not in districts_with_schools
        ]
        if len(raw.districts) < 2:
            issues.append(
                ("MissingDistrict", "need at least two districts with schools")
            )
        for d in missing:
            issues.append(("MissingDistrict", f"district {d} has no schools"))

    student_index = {}
    student_district = []
    student_type = []
    preferences = []
    for stid, did, tid, prefs in raw.students:
        if did not in district_index:
            issues.append(
                ("DanglingReference", f"student {stid} references unknown district {did}")
            )
            continue
        if tid not in type_index:
            issues.append(
                ("DanglingReference", f"student {stid} references unknown type {tid}")
            )
            continue
        pref_idx = []
        ok = True
        for cid in prefs:
            if cid not in school_index:
                issues.append(
                    ("DanglingReference", f"student {stid} ranks unknown school {cid}")
                )
                ok = False
                break
            pref_idx.append(school_index[cid])
        if not ok:
            continue
        if sorted(pref_idx) != list(range(len(school_index))):
            issues.append(
                (
                    "IncompletePreference",
                    f"student {stid} must rank every school exactly once",
                )
            )
            continue
        student_index[stid] = len(student_index)
        student_district.append(district_index[did])
        student_type.append(type_index[tid])
        preferences.append(tuple(pref_idx))

    structural = bool(issues)

    for c, cap in enumerate(capacities):
        if cap < 1:
            issues.append(
                (
                    "CapacityShortfall",
                    f"school {list(school_index)[c]} has capacity {cap} < 1",
                )
            )

    # per-district capacity must cover the district's own students
    if not structural:
        k_district = [0] * len(raw.districts)
        for d in student_district:
            k_district[d] += 1
        cap_by_district = [0] * len(raw.districts)
        for c, d in enumerate(school_district):
            cap_by_district[d] += capacities[c]
        for i, did in enumerate(raw.districts):
            if k_district[i] > cap_by_district[i]:
                issues.append(
                    (
                        "CapacityShortfall",
                        f"district {did} has {k_district[i]} students but "
                        f"total school capacity {cap_by_district[i]}",
                    )
                )

    # initial matching: every student exactly one school, capacities respected
    initial_school = [None] * len(student_index)
    if not structural:
        load = [0] * len(school_index)
        for stid, cid in raw.initial_matching.items():
            if stid not in student_index:
                issues.append(
                    ("DanglingReference", f"initial matching names unknown student {stid}")
                )
                continue
            if cid not in school_index:
                issues.append(
                    ("DanglingReference", f"initial matching names unknown school {cid}")
                )
                continue
            initial_school[student_index[stid]] = school_index[cid]
            load[school_index[cid]] += 1
        for stid, idx in student_index.items():
            if initial_school[idx] is None:
                issues.append(
                    ("InfeasibleInitialMatching", f"student {stid} has no initial school")
                )
        for cid, idx in school_index.items():
            if load[idx] > capacities[idx]:
                issues.append(
                    (
                        "InfeasibleInitialMatching",
                        f"school {cid} holds {load[idx]} students initially, "
                        f"capacity {capacities[idx]}",
                    )
                )

    if issues:
        raise ValidationError(issues)

    k_district = [0] * len(raw.districts)
    for d in student_district:
        k_district[d] += 1
    k_type = [0] * len(raw.types)
    for t in student_type:
        k_type[t] += 1
    district_schools = tuple(
        tuple(c for c, d in enumerate(school_district) if d == i)
        for i in range(len(raw.districts))
    )
    # rank[s][c]: position of school c in student s's preference list
    rank = tuple(
        tuple(p.index(c) for c in range(len(school_index))) for p in preferences
    )

    return Problem(
        student_ids=tuple(student_index),
        district_ids=tuple(raw.districts),
        school_ids=tuple(school_index),
        type_ids=tuple(raw.types),
        student_district=tuple(student_district),
        student_type=tuple(student_type),
        preferences=tuple(preferences),
        school_district=tuple(school_district),
        capacities=tuple(capacities),
        initial_school=tuple(initial_school),
        k_district=tuple(k_district),
        k_type=tuple(k_type),
        district_schools=district_schools,
        rank=rank,
    )


def with_preferences(problem: Problem, student: int, prefs) -> Problem:
    """A copy of ``problem`` where one student reports a different order."""
    new_prefs = list(problem.preferences)
    new_prefs[student] = tuple(prefs)
    new_rank = list(problem.rank)
    new_rank[student] = tuple(
        new_prefs[student].index(c) for c in range(problem.num_schools)
    )
    return Problem(
        student_ids=problem.student_ids,
        district_ids=problem.district_ids,
        school_ids=problem.school_ids,
        type_ids=problem.type_ids,
        student_district=problem.student_district,
        student_type=problem.student_type,
        preferences=tuple(new_prefs),
        school_district=problem.school_district,
        capacities=problem.capacities,
        initial_school=problem.initial_school,
        k_district=problem.k_district,
        k_type=problem.k_type,
        district_schools=problem.district_schools,
        rank=tuple(new_rank),
    )


# -- operations on matchings ------------------------------------------------------


def distribution_of(X: Matching, problem: Problem) -> Distribution:
    """The school-by-type head count of ``X``.

    Requires X to be feasible for students; a duplicated student would
    silently double-count, so it raises instead.
    """
    seen = set()
    rows = [[0] * problem.num_types for _ in range(problem.num_schools)]
    for x in X:
        if x.student in seen:
            raise ValidationError(
                [("DuplicateStudent", f"student index {x.student} holds two contracts")]
            )
        seen.add(x.student)
        rows[x.school][problem.student_type[x.student]] += 1
    return Distribution(tuple(tuple(row) for row in rows))


def is_feasible(X: Matching, problem: Problem) -> FeasibilityReport:
    """Report the two feasibility flags separately."""
    per_student = {}
    load = [0] * problem.num_schools
    for x in X:
        per_student[x.student] = per_student.get(x.student, 0) + 1
        load[x.school] += 1
    dups = tuple(sorted(s for s, n in per_student.items() if n > 1))
    over = tuple(
        sorted(c for c in range(problem.num_schools) if load[c] > problem.capacities[c])
    )
    return FeasibilityReport(
        feasible_for_students=not dups,
        within_capacity=not over,
        duplicate_students=dups,
        over_capacity_schools=over,
    )


def pareto_dominates(X: Matching, Y: Matching, problem: Problem) -> bool:
    """True iff every student weakly prefers X and someone strictly does."""
    strict = False
    for s in range(problem.num_students):
        rx = problem.rank_of(s, problem.outcome_school(X, s))
        ry = problem.rank_of(s, problem.outcome_school(Y, s))
        if rx > ry:
            return False
        if rx < ry:
            strict = True
    return strict


def sort_matching(X: Matching):
    """Canonical listing of a matching: by (student, school) index."""
    return sorted(X, key=lambda x: (x.student, x.school))
