"""Campaign persistence: canonical JSON files under one directory.

Layout of a campaign directory:

    campaign.json            run metadata (the only file with wall-clock data)
    coverage.json            mission coverage check
    tests.json               every generated test, main and focused
    <test-id>.json           one file per executed test: test + profile + verdict
    analysis.json            clustering output
    truthtables/<key>.json   one table per representative, plus .csv
    faulttrees/<key>.json    one tree per representative, plus .dot, plus combined
    soundness.json           cut-set re-execution results
    report.txt               human-readable digest

All JSON is written canonically (sorted keys, two-space indent, trailing
newline), so re-running a campaign with the same seed reproduces every
file byte for byte; campaign.json is the lone exception because it records
when and how long the run was.

Everything needed to regenerate a test deterministically (spec, mission,
config, generator settings, oracle tree, master seed) is embedded in
campaign.json, so a replay works even after its result file was deleted.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .analysis import AnalysisResult
from .executor import ExecutionProfile
from .fuzzspec import FuzzSpecification, MissionPlan, parse_fuzz_spec, parse_mission
from .oracle import Verdict
from .sutmodel import SutConfig
from .testgen import GeneratorConfig, TestCase, generate


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_dumps(obj), encoding="utf-8")


def read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


@dataclass
class Campaign:
    """A campaign directory pulled back into memory."""

    root: Path
    spec: FuzzSpecification
    mission: MissionPlan
    config: SutConfig
    generator: GeneratorConfig
    oracle_version: str
    oracle_tree_raw: dict
    master_seed: int
    tests: list[TestCase] = field(default_factory=list)
    focused_tests: dict[str, list[TestCase]] = field(default_factory=dict)
    profiles: dict[str, ExecutionProfile] = field(default_factory=dict)
    verdicts: dict[str, Verdict] = field(default_factory=dict)

    def results(self, tests: Optional[list[TestCase]] = None):
        """(test, profile, verdict) triples for the given tests (default: main)."""
        chosen = self.tests if tests is None else tests
        return [
            (t, self.profiles[t.test_id], self.verdicts[t.test_id])
            for t in chosen
            if t.test_id in self.profiles
        ]

    def find_test(self, test_id: str) -> Optional[TestCase]:
        for t in self.tests:
            if t.test_id == test_id:
                return t
        for ts in self.focused_tests.values():
            for t in ts:
                if t.test_id == test_id:
                    return t
        return None


def save_campaign_meta(
    root: Path,
    spec: FuzzSpecification,
    mission: MissionPlan,
    config: SutConfig,
    generator: GeneratorConfig,
    oracle_version: str,
    oracle_tree_raw: dict,
    parallelism: int,
    verdict_counts: dict[str, int],
    wall_time_s: float,
    representatives: list[dict],
) -> None:
    write_json(
        root / "campaign.json",
        {
            "spec": spec.to_dict(),
            "spec_id": spec.spec_id,
            "mission": mission.to_dict(),
            "config": config.to_dict(),
            "generator": {
                "repetitions_per_combination": generator.repetitions_per_combination,
                "master_seed": generator.master_seed,
                "mission_policy": generator.mission_policy,
            },
            "oracle_version": oracle_version,
            "oracle_tree": oracle_tree_raw,
            "master_seed": generator.master_seed,
            "parallelism": parallelism,
            "verdict_counts": verdict_counts,
            "representatives": representatives,
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "wall_time_s": round(wall_time_s, 3),
        },
    )


def save_coverage(root: Path, coverage_dict: dict) -> None:
    write_json(root / "coverage.json", coverage_dict)


def save_tests(root: Path, main: list[TestCase], focused: dict[str, list[TestCase]]) -> None:
    write_json(
        root / "tests.json",
        {
            "main": [t.to_dict() for t in main],
            "focused": {key: [t.to_dict() for t in ts] for key, ts in focused.items()},
        },
    )


def save_result(root: Path, test: TestCase, profile: ExecutionProfile, verdict: Verdict) -> None:
    write_json(
        root / f"{test.test_id}.json",
        {"test": test.to_dict(), "profile": profile.to_dict(), "verdict": verdict.to_dict()},
    )


def load_result(root: Path, test_id: str) -> Optional[dict]:
    path = root / f"{test_id}.json"
    if not path.exists():
        return None
    return read_json(path)


def save_analysis(root: Path, result: AnalysisResult) -> None:
    write_json(root / "analysis.json", result.to_dict())


def table_csv(table_dict: dict) -> str:
    axes = list(table_dict["axes"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        axes + ["mode_at_injection", "runs", "valid", "failures", "failure_rate", "split", "residual"]
    )
    for row in table_dict["rows"]:
        writer.writerow(
            [row["values"][a] for a in axes]
            + [
                row["observed_mode"],
                row["runs"],
                row["valid"],
                row["failures"],
                f"{row['failure_rate']:.4f}",
                int(row["split"]),
                int(row["residual"]),
            ]
        )
    return buf.getvalue()


def save_truth_table(root: Path, key: str, table_dict: dict) -> None:
    write_json(root / "truthtables" / f"{key}.json", table_dict)
    path = root / "truthtables" / f"{key}.csv"
    path.write_text(table_csv(table_dict), encoding="utf-8")


def save_fault_tree(root: Path, key: str, tree_dict: dict, dot: str) -> None:
    write_json(root / "faulttrees" / f"{key}.json", tree_dict)
    path = root / "faulttrees" / f"{key}.dot"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dot, encoding="utf-8")


def save_soundness(root: Path, results: list[dict]) -> None:
    write_json(root / "soundness.json", results)


def save_report(root: Path, text: str) -> None:
    (root / "report.txt").write_text(text, encoding="utf-8")


def load_campaign(root: Path) -> Campaign:
    meta = read_json(root / "campaign.json")
    gen_raw = meta["generator"]
    generator = GeneratorConfig(
        repetitions_per_combination=gen_raw["repetitions_per_combination"],
        master_seed=gen_raw["master_seed"],
        mission_policy=gen_raw["mission_policy"],
    )
    spec = parse_fuzz_spec(meta["spec"], spec_id=meta.get("spec_id", "spec"))
    campaign = Campaign(
        root=root,
        spec=spec,
        mission=parse_mission(meta["mission"]),
        config=SutConfig.from_dict(meta["config"]),
        generator=generator,
        oracle_version=meta["oracle_version"],
        oracle_tree_raw=meta["oracle_tree"],
        master_seed=meta["master_seed"],
    )
    tests_path = root / "tests.json"
    if tests_path.exists():
        tests_doc = read_json(tests_path)
        campaign.tests = [TestCase.from_dict(t) for t in tests_doc["main"]]
        campaign.focused_tests = {
            key: [TestCase.from_dict(t) for t in ts]
            for key, ts in tests_doc.get("focused", {}).items()
        }
    else:
        # the manifest carries everything generation needs, so a deleted
        # tests.json is recoverable
        campaign.tests = generate(campaign.spec, generator)
    every = list(campaign.tests)
    for ts in campaign.focused_tests.values():
        every.extend(ts)
    for test in every:
        path = root / f"{test.test_id}.json"
        if not path.exists():
            continue
        doc = read_json(path)
        campaign.profiles[test.test_id] = ExecutionProfile.from_dict(doc["profile"])
        campaign.verdicts[test.test_id] = Verdict.from_dict(doc["verdict"])
    return campaign


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------


def _format_table(table: dict) -> str:
    axes = list(table["axes"])
    headers = axes + ["mode@injection", "runs", "valid", "fail%", "status"]
    rows_out = []
    for row in table["rows"]:
        rate = row["failure_rate"]
        status = "FAIL" if rate > 0 else "ok"
        if row["residual"]:
            status = "MIXED"
        rows_out.append(
            [str(row["values"][a]) for a in axes]
            + [
                row["observed_mode"],
                str(row["runs"]),
                str(row["valid"]),
                f"{rate:.1f}",
                status,
            ]
        )
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows_out)) if rows_out else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows_out:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    if table["unreachable"]:
        lines.append(f"unreachable cells: {len(table['unreachable'])}")
    return "\n".join(lines)


def render_report(
    meta: dict,
    verdict_counts: dict[str, int],
    analysis: Optional[dict],
    tables: list[tuple[str, dict]],
    fault_trees: list[dict],
    soundness: list[dict],
) -> str:
    """Plain-text digest of a finished campaign. Pure function over dicts."""
    out: list[str] = []
    out.append("campaign report")
    out.append("=" * 60)
    out.append(f"mission:        {meta['mission']['id']}")
    out.append(f"oracle:         {meta['oracle_version']}")
    out.append(f"master seed:    {meta['master_seed']}")
    out.append(f"seeded faults:  {', '.join(meta['config']['seeded_faults']) or '(none)'}")
    out.append("")
    out.append("verdicts")
    out.append("-" * 60)
    for verdict in sorted(verdict_counts):
        out.append(f"  {verdict:10s} {verdict_counts[verdict]}")
    out.append("")

    if analysis:
        out.append("failure clusters")
        out.append("-" * 60)
        out.append(f"  {analysis['n_failures']} failing tests, K={analysis['k']}")
        out.append("  within-cluster sum of squares by K:")
        for k, w in analysis["wcss_curve"]:
            marker = "  <- selected" if k == analysis["k"] else ""
            out.append(f"    K={k}: {w:.6f}{marker}")
        out.append("  representatives (closest / farthest from centroid):")
        for rep in analysis["representatives"]:
            out.append(f"    cluster {rep['cluster']}: {rep['closest']} / {rep['farthest']}")
        out.append("")

    for key, table in tables:
        out.append(f"truth table {key} (scope {table['scope']})")
        out.append("-" * 60)
        out.append(_format_table(table))
        residual = [r for r in table["rows"] if r["residual"]]
        if residual:
            out.append(f"  warning: {len(residual)} cell(s) stayed mixed after splitting")
        out.append("")

    for tree in fault_trees:
        out.append(f"fault tree: {tree['hazard']}")
        out.append("-" * 60)
        if not tree["cut_sets"]:
            out.append("  (no cut sets)")
        for cs in tree["cut_sets"]:
            lits = " AND ".join(f"{l['column']}={l['value']}" for l in cs["literals"])
            out.append(f"  {{ {lits} }}")
        out.append("")

    if soundness:
        out.append("soundness re-execution")
        out.append("-" * 60)
        for s in soundness:
            lits = " AND ".join(f"{l['column']}={l['value']}" for l in s["cut_set"]["literals"])
            status = "sound" if s["sound"] else "NOT SOUND"
            out.append(f"  {{ {lits} }}: {status} {list(s['verdicts'])}")
        out.append("")
    return "\n".join(out) + "\n"
