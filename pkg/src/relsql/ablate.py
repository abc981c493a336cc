"""Ablation sweeps: named toggle settings, several seeds each, and directional checks."""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .config import ConfigError, ExperimentConfig, apply_override, experiment_from_dict

log = logging.getLogger(__name__)

# row name -> dotted-key overrides on top of the base experiment
ROWS: dict[str, dict] = {
    "baseline": {},
    # decoder
    "no-ast-relations": {"relations.ast": False},
    "no-copied-from": {"relations.copied_from": False},
    "no-decoder-relations": {"relations.ast": False, "relations.copied_from": False},
    "no-constraining-train": {"train.constrain_train": False},
    "no-constraining": {"train.constrain_train": False, "train.constrain_infer": False},
    # schema linking
    "no-nbsl": {"relations.nbsl": False},
    "no-cbsl": {"relations.cbsl": False},
    # segment masks in the first encoder stage
    "mask-q2s-only": {"relations.s_to_q": False},
    "mask-s2q-only": {"relations.q_to_s": False},
    "mask-none": {"relations.q_to_s": False, "relations.s_to_q": False},
    "mask-none-no-nbsl": {"relations.q_to_s": False, "relations.s_to_q": False, "relations.nbsl": False},
    # schema structure
    "flat-no-relations": {"relations.table_column": False, "relations.keys": False},
    "nested-no-relations": {"relations.table_column": False, "relations.keys": False,
                            "ordering": "table-column-nested"},
    "nested-shuffled-no-relations": {"relations.table_column": False, "relations.keys": False,
                                     "ordering": "table-column-nested", "shuffle_seed": 0},
}

SWEEPS: dict[str, list[str]] = {
    "constraining": ["baseline", "no-constraining"],
    "structure": ["baseline", "flat-no-relations"],
    "masks": ["baseline", "mask-q2s-only", "mask-s2q-only", "mask-none-no-nbsl"],
}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class SweepResult:
    rows: dict[str, list[float]] = field(default_factory=dict)
    errors: dict[str, list[str]] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    def mean(self, row: str) -> float:
        vals = self.rows.get(row) or []
        return statistics.fmean(vals) if vals else float("nan")

    def table(self) -> str:
        lines = [f"{'row':<30} {'mean EM':>8} {'std':>6}  runs"]
        for name, vals in self.rows.items():
            std = statistics.pstdev(vals) if len(vals) > 1 else 0.0
            runs = " ".join(f"{v:.3f}" for v in vals)
            lines.append(f"{name:<30} {self.mean(name):>8.4f} {std:>6.3f}  {runs}")
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "rows": {k: {"runs": v, "mean": self.mean(k)} for k, v in self.rows.items()},
            "errors": self.errors,
            "checks": [c.__dict__ for c in self.checks],
        }


def resolve_rows(spec: str | list[str]) -> list[str]:
    """Row names from a comma list, where sweep names expand to their rows."""
    names = [s.strip() for s in spec.split(",")] if isinstance(spec, str) else list(spec)
    names = [n for n in names if n]
    if not names:
        raise ConfigError(f"empty sweep; valid rows: {sorted(ROWS)}; sweeps: {sorted(SWEEPS)}")
    out: list[str] = []
    for n in names:
        for r in SWEEPS.get(n, [n]):
            if r not in ROWS:
                raise ConfigError(f"unknown sweep row {r!r}; valid rows: {sorted(ROWS)}; sweeps: {sorted(SWEEPS)}")
            if r not in out:
                out.append(r)
    return out


def row_config(base: ExperimentConfig, row: str, seed: int) -> ExperimentConfig:
    data = base.to_json()
    for key, value in ROWS[row].items():
        apply_override(data, f"{key}={json.dumps(value)}")
    data["train"]["seed"] = seed
    return experiment_from_dict(data)


def directional_checks(res: SweepResult) -> list[Check]:
    checks = []
    have = {k for k, v in res.rows.items() if v}

    def ge(name, hi, lo):
        a, b = res.mean(hi), res.mean(lo)
        checks.append(Check(name, a >= b, f"{hi} {a:.4f} >= {lo} {b:.4f}"))

    if {"baseline", "no-constraining"} <= have:
        ge("constrained inference >= unconstrained", "baseline", "no-constraining")
    if {"baseline", "flat-no-relations"} <= have:
        ge("structure via relations >= flat layout without relations", "baseline", "flat-no-relations")
    masks = [r for r in ("baseline", "mask-q2s-only", "mask-s2q-only", "mask-none-no-nbsl") if r in have]
    if "mask-none-no-nbsl" in masks and len(masks) > 1:
        low = res.mean("mask-none-no-nbsl")
        others = {r: res.mean(r) for r in masks if r != "mask-none-no-nbsl"}
        ok = all(low <= v for v in others.values())
        detail = f"mask-none-no-nbsl {low:.4f} vs " + ", ".join(f"{k} {v:.4f}" for k, v in others.items())
        checks.append(Check("both segment masks off without NBSL is lowest", ok, detail))
    return checks


def run_sweep(base: ExperimentConfig, rows: list[str], seeds: list[int], out_dir: str | Path,
              corpus=None) -> SweepResult:
    """Train one model per (row, seed); failures are recorded per row and the sweep continues."""
    from .train import load_corpus, run_experiment

    out = Path(out_dir)
    corpus = corpus or load_corpus(base)
    res = SweepResult()
    for row in rows:
        res.rows[row] = []
        for seed in seeds:
            cfg = row_config(base, row, seed)
            try:
                summary = run_experiment(cfg, out / row / f"seed{seed}", corpus)
            except Exception as exc:  # keep going; the row reports it
                log.error("row %s seed %d failed: %s", row, seed, exc)
                res.errors.setdefault(row, []).append(f"seed {seed}: {exc}")
                continue
            res.rows[row].append(summary["test_exact_match"])
            log.info("row %s seed %d: %.4f", row, seed, summary["test_exact_match"])
    res.checks = directional_checks(res)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.json", "w") as f:
        json.dump(res.to_json(), f, indent=1)
    return res
