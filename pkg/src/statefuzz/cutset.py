"""Truth tables over re-fuzzed cells, and their reduction to cut sets.

A truth table is scoped to one app state: the state targeted by the
representative test the focused campaign grew from. Its axes are the swept
dimensions; each row aggregates the repeated runs of one cell into a
failure rate over the runs that were valid (reached the right context).
Cells where no run was valid are set aside as unreachable, and rows whose
runs disagree are split by the observed mode at injection when that
observation separates the outcomes perfectly; rows that stay mixed are
flagged as residual and never satisfy a cut set.

A cut set is a minimal conjunction of column literals that covers at
least one row and only rows failing at 100 percent. Minimality is local:
dropping any single literal breaks sufficiency (which, for this covering
semantics, is equivalent to no proper subset being sufficient). A minimal
conjunction whose failing coverage is contained in that of another kept
conjunction is then discarded: it adds no failing evidence of its own
(with a split mode column, the delay band is a proxy for the mode race,
and this rule is what drops it).

Cut sets across tables assemble into a fault tree (one OR of AND gates)
that serializes to DOT and JSON.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from .errors import InvalidOnly
from .executor import ExecutionProfile, Executor
from .fuzzspec import FuzzSpecification, MissionPlan
from .oracle import FAILURE, INVALID, TreePart, Verdict, classify
from .sutmodel import NO_ACTION, AppState, AutopilotMode, SutConfig
from .testgen import FOCUS_AXES, TestCase, derive_seed, focused_generate

#: observed-mode markers for rows that were not split
MODE_VARIES = "*"
MODE_ABSENT = "-"

MODE_COLUMN = "mode_at_injection"
SCOPE_COLUMN = "app_state"

#: executes tests and returns (test, profile, verdict) triples in order
Runner = Callable[[list[TestCase]], list[tuple[TestCase, ExecutionProfile, Verdict]]]

_AXIS_FIELD = {
    "action": "action",
    "delay_band": "band_name",
    "throttle": "throttle",
    "geofence": "geofence",
    "wind": "wind",
    "gps_noise": "gps_noise",
    "compass_interference": "compass_interference",
}


@dataclass(frozen=True)
class TableRow:
    values: tuple[tuple[str, str], ...]   # (axis, value) in table axis order
    observed_mode: str                    # a mode, "*" (varies), or "-" (no injection)
    runs: int
    valid: int
    failures: int
    split: bool
    residual: bool
    test_ids: tuple[str, ...]

    @property
    def failure_rate(self) -> float:
        return 100.0 * self.failures / self.valid if self.valid else 0.0

    @property
    def always_fails(self) -> bool:
        return self.valid > 0 and self.failures == self.valid

    def value_of(self, axis: str) -> str:
        if axis == MODE_COLUMN:
            return self.observed_mode
        for a, v in self.values:
            if a == axis:
                return v
        raise KeyError(axis)

    def to_dict(self) -> dict:
        return {
            "values": dict(self.values),
            "observed_mode": self.observed_mode,
            "runs": self.runs,
            "valid": self.valid,
            "failures": self.failures,
            "failure_rate": round(self.failure_rate, 4),
            "split": self.split,
            "residual": self.residual,
            "test_ids": list(self.test_ids),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TableRow":
        return cls(
            values=tuple((a, v) for a, v in raw["values"].items()),
            observed_mode=raw["observed_mode"],
            runs=raw["runs"],
            valid=raw["valid"],
            failures=raw["failures"],
            split=raw["split"],
            residual=raw["residual"],
            test_ids=tuple(raw["test_ids"]),
        )


@dataclass(frozen=True)
class TruthTable:
    scope: str
    axes: tuple[str, ...]
    rows: tuple[TableRow, ...]
    unreachable: tuple[tuple[tuple[str, str], ...], ...] = ()

    def residual_rows(self) -> tuple[TableRow, ...]:
        return tuple(r for r in self.rows if r.residual)

    def has_mode_column(self) -> bool:
        return any(r.observed_mode not in (MODE_VARIES, MODE_ABSENT) for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "scope": self.scope,
            "axes": list(self.axes),
            "rows": [r.to_dict() for r in self.rows],
            "unreachable": [dict(cell) for cell in self.unreachable],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TruthTable":
        return cls(
            scope=raw["scope"],
            axes=tuple(raw["axes"]),
            rows=tuple(TableRow.from_dict(r) for r in raw["rows"]),
            unreachable=tuple(
                tuple((a, v) for a, v in cell.items()) for cell in raw["unreachable"]
            ),
        )


def table_from_results(
    scope: AppState,
    axes: Sequence[str],
    items: Sequence[tuple[TestCase, ExecutionProfile, Verdict]],
) -> TruthTable:
    """Aggregate executed focused runs into a truth table.

    Raises InvalidOnly when not a single cell produced a valid run (the
    state was never reachable under any cell, so there is nothing to say).
    """
    def cell_key(test: TestCase) -> tuple[tuple[str, str], ...]:
        return tuple((axis, getattr(test, _AXIS_FIELD[axis])) for axis in axes)

    cells: dict[tuple, list[tuple[TestCase, ExecutionProfile, Verdict]]] = {}
    for test, profile, verdict in items:
        if test.app_state is not scope:
            continue
        cells.setdefault(cell_key(test), []).append((test, profile, verdict))

    rows: list[TableRow] = []
    unreachable: list[tuple[tuple[str, str], ...]] = []
    for key in sorted(cells):
        bucket = cells[key]
        valid = [(t, p, v) for t, p, v in bucket if v.verdict != INVALID]
        if not valid:
            unreachable.append(key)
            continue
        rows.extend(_rows_for_cell(key, bucket, valid))

    if not rows:
        raise InvalidOnly(
            f"every cell scoped to {scope.value} was invalid; the state was never reached"
        )
    return TruthTable(
        scope=scope.value, axes=tuple(axes), rows=tuple(rows), unreachable=tuple(unreachable)
    )


def build_truth_table(
    representative: TestCase,
    axes: Sequence[str],
    runs_per_cell: int,
    runner: Runner,
    spec: FuzzSpecification,
    master_seed: int = 0,
) -> TruthTable:
    """Focused re-fuzz around a representative, aggregated into a table.

    The runner executes and classifies the generated tests (and may store
    them); build_truth_table only shapes its output.
    """
    ordered = [a for a in FOCUS_AXES if a in axes]
    tests = focused_generate(representative, ordered, runs_per_cell, spec, master_seed)
    items = runner(tests)
    return table_from_results(representative.app_state, ordered, items)


def _rows_for_cell(
    key: tuple[tuple[str, str], ...],
    bucket: list,
    valid: list,
) -> list[TableRow]:
    failures = sum(1 for _t, _p, v in valid if v.verdict == FAILURE)
    modes = [_observed_mode(t, p) for t, p, _v in valid]
    uniform_mode = modes[0] if len(set(modes)) == 1 else MODE_VARIES

    if 0 < failures < len(valid):
        groups: dict[str, list] = {}
        for (t, p, v), m in zip(valid, modes):
            groups.setdefault(m, []).append((t, p, v))
        pure = len(groups) > 1 and all(
            len({item[2].verdict == FAILURE for item in grp}) == 1 for grp in groups.values()
        )
        if pure:
            out = []
            for mode in sorted(groups):
                grp = groups[mode]
                n_fail = sum(1 for _t, _p, v in grp if v.verdict == FAILURE)
                out.append(
                    TableRow(
                        values=key,
                        observed_mode=mode,
                        runs=len(grp),
                        valid=len(grp),
                        failures=n_fail,
                        split=True,
                        residual=False,
                        test_ids=tuple(t.test_id for t, _p, _v in grp),
                    )
                )
            return out
        return [
            TableRow(
                values=key,
                observed_mode=uniform_mode,
                runs=len(bucket),
                valid=len(valid),
                failures=failures,
                split=False,
                residual=True,
                test_ids=tuple(t.test_id for t, _p, _v in valid),
            )
        ]

    return [
        TableRow(
            values=key,
            observed_mode=uniform_mode,
            runs=len(bucket),
            valid=len(valid),
            failures=failures,
            split=False,
            residual=False,
            test_ids=tuple(t.test_id for t, _p, _v in valid),
        )
    ]


def _observed_mode(test: TestCase, profile: ExecutionProfile) -> str:
    if test.action == NO_ACTION or profile.mode_at_injection is None:
        return MODE_ABSENT
    return profile.mode_at_injection


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------

Conjunction = tuple[tuple[str, str], ...]


def _row_matches(row: TableRow, literal: tuple[str, str]) -> bool:
    axis, value = literal
    if axis == MODE_COLUMN:
        return row.observed_mode == value  # "*" and "-" rows never match a mode literal
    return row.value_of(axis) == value


def minimize(table: TruthTable) -> list[Conjunction]:
    """Minimal sufficient conjunctions over the table's columns.

    Sufficient: covers at least one row and every covered row fails at
    100 percent. Minimal: no single literal can be dropped. A conjunction
    whose coverage is contained in another's is then discarded (largest
    coverage kept first), so each surviving cut set owns at least one
    failing row no other one explains. Deterministic: output ordered by
    (size, lexicographic).
    """
    rows = table.rows
    n = len(rows)
    all_mask = (1 << n) - 1
    failing_mask = 0
    for i, row in enumerate(rows):
        if row.always_fails:
            failing_mask |= 1 << i

    def sufficient(mask: int) -> bool:
        return mask != 0 and (mask & ~failing_mask) == 0

    if sufficient(all_mask):
        return [()]
    if failing_mask == 0:
        return []

    # literal pool: per column, the values failing rows actually take
    columns: list[str] = list(table.axes)
    if table.has_mode_column():
        columns.append(MODE_COLUMN)
    pool: list[tuple[str, str]] = []
    for axis in columns:
        seen: list[str] = []
        for i, row in enumerate(rows):
            if not (failing_mask >> i) & 1:
                continue
            v = row.value_of(axis)
            if axis == MODE_COLUMN and v in (MODE_VARIES, MODE_ABSENT):
                continue
            if v not in seen:
                seen.append(v)
        pool.extend((axis, v) for v in sorted(seen))

    masks = {
        lit: sum(1 << i for i, row in enumerate(rows) if _row_matches(row, lit))
        for lit in pool
    }

    def conj_mask(conj: Conjunction) -> int:
        m = all_mask
        for lit in conj:
            m &= masks[lit]
        return m

    minimal: list[Conjunction] = []
    # breadth-first by size; only conjunctions that still cover both a
    # failing and a non-failing row are worth extending
    frontier: list[tuple[Conjunction, int]] = [((), all_mask)]
    pool_index = {lit: i for i, lit in enumerate(pool)}
    while frontier:
        next_frontier: list[tuple[Conjunction, int]] = []
        for conj, mask in frontier:
            used_axes = {axis for axis, _v in conj}
            start = pool_index[conj[-1]] + 1 if conj else 0
            for lit in pool[start:]:
                if lit[0] in used_axes:
                    continue
                m = mask & masks[lit]
                if m == 0 or (m & failing_mask) == 0:
                    continue
                cand = conj + (lit,)
                if sufficient(m):
                    if all(
                        not sufficient(conj_mask(tuple(l for l in cand if l != drop)))
                        for drop in cand
                    ):
                        minimal.append(cand)
                else:
                    next_frontier.append((cand, m))
        frontier = next_frontier

    # coverage-dominance: keep a conjunction only if no kept one already
    # explains every failing row it covers
    by_coverage = sorted(
        minimal, key=lambda c: (-_popcount(conj_mask(c)), len(c), c)
    )
    kept: list[Conjunction] = []
    kept_masks: list[int] = []
    for conj in by_coverage:
        m = conj_mask(conj)
        if any(m & ~km == 0 for km in kept_masks):
            continue
        kept.append(conj)
        kept_masks.append(m)

    kept.sort(key=lambda c: (len(c), c))
    return kept


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


# ---------------------------------------------------------------------------
# cut sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutSet:
    literals: tuple[tuple[str, str], ...]
    sources: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "literals": [{"column": a, "value": v} for a, v in self.literals],
            "sources": list(self.sources),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CutSet":
        return cls(
            literals=tuple((l["column"], l["value"]) for l in raw["literals"]),
            sources=tuple(raw.get("sources", ())),
        )


def cut_sets_for_table(table: TruthTable, source: str = "") -> list[CutSet]:
    """Scope-qualified cut sets: the table's app state leads every set."""
    scope_lit = (SCOPE_COLUMN, table.scope)
    sources = (source,) if source else ()
    return [
        CutSet(literals=(scope_lit,) + conj, sources=sources) for conj in minimize(table)
    ]


def merge_cut_sets(groups: Sequence[Sequence[CutSet]]) -> list[CutSet]:
    """Dedup identical literal sets across tables, merging provenance."""
    merged: dict[tuple, list[str]] = {}
    order: list[tuple] = []
    for group in groups:
        for cs in group:
            if cs.literals not in merged:
                merged[cs.literals] = []
                order.append(cs.literals)
            merged[cs.literals].extend(s for s in cs.sources if s not in merged[cs.literals])
    return [CutSet(literals=lits, sources=tuple(merged[lits])) for lits in order]


# ---------------------------------------------------------------------------
# soundness re-execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SoundnessResult:
    cut_set: CutSet
    verdicts: tuple[str, ...]
    sound: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "cut_set": self.cut_set.to_dict(),
            "verdicts": list(self.verdicts),
            "sound": self.sound,
            "note": self.note,
        }


def _delay_for(
    literals: Mapping[str, str], spec: FuzzSpecification, config: SutConfig
) -> Optional[tuple[str, float, float, float]]:
    """Pick (band_name, band_min, band_max, delay) realizing band/mode literals."""
    lo_w, hi_w = config.latency_window_ms
    bands = spec.environment.bands
    if "delay_band" in literals:
        bands = tuple(b for b in bands if b.name == literals["delay_band"])
        if not bands:
            return None
    span_lo = min(b.min_ms for b in bands)
    span_hi = max(b.max_ms for b in bands)
    mode = literals.get(MODE_COLUMN)
    if mode == AutopilotMode.STABILIZED.value:
        hi = min(span_hi, lo_w)
        if hi <= span_lo:
            return None
        delay = (span_lo + hi) / 2.0
    elif mode == AutopilotMode.OFFBOARD.value:
        lo = max(span_lo, hi_w)
        if lo >= span_hi:
            return None
        delay = (lo + span_hi) / 2.0
    else:
        delay = (span_lo + span_hi) / 2.0
    for b in bands:
        if b.min_ms <= delay < b.max_ms:
            return b.name, b.min_ms, b.max_ms, delay
    return bands[0].name, bands[0].min_ms, bands[0].max_ms, delay


def soundness_check(
    cut_set: CutSet,
    spec: FuzzSpecification,
    mission: MissionPlan,
    config: SutConfig,
    tree: TreePart,
    master_seed: int = 0,
    trials: int = 3,
) -> SoundnessResult:
    """Re-execute fresh runs satisfying the cut set; sound means all fail.

    Unbound columns take the first spec value; the injection delay is
    chosen to realize the band and observed-mode literals (a cut set whose
    mode literal cannot be realized under the config is reported as such).
    """
    lits = dict(cut_set.literals)
    pairs = spec.constraint_pairs()
    scope_name = lits.get(SCOPE_COLUMN, pairs[0][1].state.value)
    scope = AppState(scope_name)
    pair = next(((m, t) for m, t in pairs if t.state is scope), pairs[0])
    mode, target = pair
    action = lits.get("action", spec.actions[0].value)
    placed = _delay_for(lits, spec, config)
    if placed is None:
        return SoundnessResult(cut_set, (), False, "mode/band literals are unrealizable")
    band_name, band_min, band_max, delay = placed
    env = spec.environment

    ex = Executor(mission, config)
    verdicts: list[str] = []
    for trial in range(trials):
        seed = derive_seed(master_seed, "soundness", str(cut_set.literals), trial)
        test = TestCase(
            test_id=f"s-{scope.value}-{trial}",
            index=trial,
            spec_id=spec.spec_id,
            mission_id=mission.id,
            app_state=scope,
            target_mode=mode,
            recurring=target.recurring,
            action=action,
            band_name=band_name,
            band_min_ms=band_min,
            band_max_ms=band_max,
            delay_ms=delay,
            throttle=lits.get("throttle", env.throttle[0]),
            geofence=lits.get("geofence", env.geofence[0]),
            wind=lits.get("wind", env.wind[0]),
            gps_noise=lits.get("gps_noise", env.gps_noise[0]),
            compass_interference=lits.get("compass_interference", env.compass_interference[0]),
            seed=seed,
            repetition=trial,
        )
        profile = ex.execute(test)
        verdicts.append(classify(test, profile, tree).verdict)
    return SoundnessResult(
        cut_set, tuple(verdicts), sound=all(v == FAILURE for v in verdicts)
    )


# ---------------------------------------------------------------------------
# fault tree
# ---------------------------------------------------------------------------

#: literal column -> display category and fill color
_CATEGORY = {
    SCOPE_COLUMN: ("state", "yellow"),
    MODE_COLUMN: ("state", "yellow"),
    "action": ("action", "pink"),
}
_DEFAULT_CATEGORY = ("environment", "palegreen")


def literal_category(column: str) -> tuple[str, str]:
    return _CATEGORY.get(column, _DEFAULT_CATEGORY)


@dataclass(frozen=True)
class FaultTree:
    hazard: str
    cut_sets: tuple[CutSet, ...]

    def to_dict(self) -> dict:
        return {
            "hazard": self.hazard,
            "gate": "OR",
            "cut_sets": [
                {
                    "gate": "AND",
                    "literals": [
                        {
                            "column": a,
                            "value": v,
                            "category": literal_category(a)[0],
                        }
                        for a, v in cs.literals
                    ],
                    "sources": list(cs.sources),
                }
                for cs in self.cut_sets
            ],
        }

    def to_dot(self) -> str:
        lines = [
            "digraph fault_tree {",
            "  rankdir=TB;",
            '  node [fontname="Helvetica"];',
            f'  root [shape=box, style=bold, label="{_dot_escape(self.hazard)}"];',
        ]
        if len(self.cut_sets) != 1:
            lines.append('  or0 [shape=invtriangle, label="OR"];')
            lines.append("  root -> or0;")
            parent = "or0"
        else:
            parent = "root"
        for i, cs in enumerate(self.cut_sets):
            gate = f"and{i}"
            lines.append(f'  {gate} [shape=invhouse, label="AND"];')
            lines.append(f"  {parent} -> {gate};")
            for j, (column, value) in enumerate(cs.literals):
                _category, color = literal_category(column)
                node = f"leaf{i}_{j}"
                label = _dot_escape(f"{column} = {value}")
                lines.append(
                    f'  {node} [shape=ellipse, style=filled, fillcolor={color}, label="{label}"];'
                )
                lines.append(f"  {gate} -> {node};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def build_fault_tree(hazard: str, cut_sets: Sequence[CutSet]) -> FaultTree:
    return FaultTree(hazard=hazard, cut_sets=tuple(cut_sets))
