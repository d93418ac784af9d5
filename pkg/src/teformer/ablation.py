"""Ablation harness: trains component-switched variants under identical budgets.

Two families of rows are produced: the decoder progression (no components,
single additions, then the combined and full variants) and the texture-module
comparison (no texture branch / bare quantization features / full module).
Every variant trains once per seed with the same data and iteration budget;
medians over seeds are reported.  Switched-off components are replaced by
plain convolution stand-ins of matched width, so comparisons measure the
mechanism rather than raw capacity.
"""

from __future__ import annotations

import csv
import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

from .complexity import count_params_flops
from .config import RunConfig
from .data import gen_synthetic
from .errors import ConfigurationError
from .metrics import MetricsReport
from .model import build_model
from .train import evaluate, train_loop

COMPONENTS = ("tam", "qco", "pasppm", "dam", "egffm")
_DECODER_ORDER = ("pasppm", "dam", "egffm")


@dataclass
class AblationRow:
    name: str
    tam_mode: str
    pasppm: bool
    dam: bool
    egffm: bool
    seeds: list[int] = field(default_factory=list)
    reports: list[MetricsReport] = field(default_factory=list)
    params: int = 0
    flops: int = 0
    wall_time_s: float = 0.0
    config_hash: str = ""

    def _median(self, values: list[float]) -> float:
        ordered = sorted(values)
        n = len(ordered)
        return ordered[n // 2] if n % 2 else 0.5 * (ordered[n // 2 - 1] + ordered[n // 2])

    @property
    def miou(self) -> float:
        return self._median([r.miou for r in self.reports])

    @property
    def mf1(self) -> float:
        return self._median([r.mf1 for r in self.reports])

    @property
    def pa(self) -> float:
        return self._median([r.pa for r in self.reports])

    @property
    def boundary_f1(self) -> float:
        return self._median([r.boundary_f1 or 0.0 for r in self.reports])

    def per_class_median(self, which: str) -> list[float | None]:
        rows = [getattr(r, f"per_class_{which}") for r in self.reports]
        out = []
        for values in zip(*rows):
            present = [v for v in values if v is not None]
            out.append(self._median(present) if present else None)
        return out


def _row_plan(components: list[str]) -> list[tuple[str, dict]]:
    """Row name plus model-config overrides for each ablation variant."""
    for c in components:
        if c not in COMPONENTS:
            raise ConfigurationError(f"unknown ablation component '{c}' (known: {COMPONENTS})")
    decoder_selected = [c for c in _DECODER_ORDER if c in components]
    rows: list[tuple[str, dict]] = []
    off_all = {"use_pasppm": False, "use_dam": False, "use_egffm": False}
    rows.append(("group1_baseline", dict(off_all)))
    if decoder_selected == list(_DECODER_ORDER):
        rows.append(("group2_pasppm", {**off_all, "use_pasppm": True}))
        rows.append(("group3_dam", {**off_all, "use_dam": True}))
        rows.append(("group4_pasppm_dam", {**off_all, "use_pasppm": True, "use_dam": True}))
        rows.append(("group5_full", {}))
    else:
        cumulative = dict(off_all)
        for i, comp in enumerate(decoder_selected, start=2):
            cumulative = {**cumulative, f"use_{comp}": True}
            rows.append((f"group{i}_{comp}", dict(cumulative)))
    if "tam" in components or "qco" in components:
        rows.append(("tam_none", {"tam_mode": "off"}))
        if "qco" in components:
            rows.append(("tam_qco_only", {"tam_mode": "qco_only"}))
        rows.append(("tam_full", {"tam_mode": "full"}))
    return rows


@dataclass
class AblationReport:
    rows: list[AblationRow]

    def row(self, name: str) -> AblationRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def write_csv(self, path: str | Path):
        num_classes = len(self.rows[0].reports[0].per_class_iou) if self.rows else 0
        header = [
            "row", "tam_mode", "pasppm", "dam", "egffm", "seeds", "config_hash",
            "miou", "mf1", "pa", "boundary_f1", "params", "flops", "wall_time_s",
        ]
        header += [f"class{i}_iou" for i in range(num_classes)]
        header += [f"class{i}_f1" for i in range(num_classes)]
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in self.rows:
                record = [
                    r.name, r.tam_mode, int(r.pasppm), int(r.dam), int(r.egffm),
                    ";".join(str(s) for s in r.seeds), r.config_hash,
                    f"{r.miou:.6f}", f"{r.mf1:.6f}", f"{r.pa:.6f}", f"{r.boundary_f1:.6f}",
                    r.params, r.flops, f"{r.wall_time_s:.3f}",
                ]
                for which in ("iou", "f1"):
                    for v in r.per_class_median(which):
                        record.append("" if v is None else f"{v:.6f}")
                writer.writerow(record)


def run_ablation(run_cfg: RunConfig, components: list[str] | None = None,
                 seeds: tuple[int, ...] = (0, 1, 2), out_csv: str | Path | None = None,
                 train_samples=None, val_samples=None, progress=None) -> AblationReport:
    """Train every variant/seed pair and aggregate medians into a report."""
    components = list(components) if components else list(COMPONENTS)
    plan = _row_plan(components)
    d = run_cfg.data
    if train_samples is None:
        train_samples = gen_synthetic(d.count, d.size, d.num_classes, d.seed)
    if val_samples is None:
        val_samples = gen_synthetic(max(d.count // 5, 8), d.size, d.num_classes, d.seed + 1)

    rows = []
    for name, overrides in plan:
        base = dataclasses.replace(run_cfg.model, **overrides)
        row = AblationRow(
            name=name,
            tam_mode=base.tam_mode,
            pasppm=base.use_pasppm,
            dam=base.use_dam,
            egffm=base.use_egffm,
        )
        started = time.perf_counter()
        for seed in seeds:
            model_cfg = dataclasses.replace(base, seed=seed)
            train_cfg = dataclasses.replace(run_cfg.train, seed=seed)
            variant_cfg = RunConfig(model=model_cfg, train=train_cfg, data=run_cfg.data)
            model = build_model(model_cfg)
            train_loop(model, train_samples, train_cfg, d.num_classes, d.ignore_index)
            report = evaluate(model, val_samples, d.num_classes, d.ignore_index, train_cfg.batch_size)
            row.seeds.append(seed)
            row.reports.append(report)
            row.config_hash = variant_cfg.config_hash
            if progress is not None:
                progress(name, seed, report)
        row.params, row.flops = count_params_flops(build_model(dataclasses.replace(base, seed=seeds[0])),
                                                   (d.size, d.size))
        row.wall_time_s = time.perf_counter() - started
        rows.append(row)
    report = AblationReport(rows)
    if out_csv is not None:
        report.write_csv(out_csv)
    return report
