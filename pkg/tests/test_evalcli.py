"""Ablation runner and report emission."""

import numpy as np
import pytest

from fpmt import evalcli as ev
from fpmt.errors import ConfigError
from fpmt.gan_augment import GanConfig
from fpmt.metrics import MetricRow
from fpmt.pipeline import PipelineConfig


def tiny_grid(**kw):
    base = PipelineConfig(stage1_epochs=2, stage2_epochs=4, stage3_epochs=2,
                          batch_size=32, unlabeled_per_class=60, test_per_class=40,
                          depth=2, width=8, lr_scale=300.0, gan=GanConfig(steps=30))
    defaults = dict(variants=["mt", "pmt"], label_counts=[10], seeds=[0, 1],
                    n_normal=160, n_incident=160, delta=2.0, base_config=base)
    defaults.update(kw)
    return ev.AblationGrid(**defaults)


class TestRunAblation:
    def test_row_count_matches_grid(self):
        result = ev.run_ablation(tiny_grid())
        assert len(result.rows) == 4
        assert not result.failures

    def test_aggregate_is_mean_over_seeds(self):
        result = ev.run_ablation(tiny_grid())
        agg = result.aggregate()
        for (variant, labels), cell in agg.items():
            rows = [r for r in result.rows
                    if r.variant == variant and r.labels_per_class == labels]
            assert cell["n_seeds"] == len(rows) == 2
            assert cell["dr_mean"] == pytest.approx(np.mean([r.dr for r in rows]))
            assert cell["dr_std"] == pytest.approx(np.std([r.dr for r in rows]))

    def test_reproducible(self):
        a = ev.run_ablation(tiny_grid())
        b = ev.run_ablation(tiny_grid())
        assert a.rows == b.rows

    def test_failures_recorded_without_aborting(self):
        # second label count is infeasible for the 160-row classes
        result = ev.run_ablation(tiny_grid(label_counts=[10, 10_000]))
        assert len(result.rows) == 4
        assert len(result.failures) == 4
        for variant, labels, seed, message in result.failures:
            assert labels == 10_000
            assert "DataError" in message

    def test_supervised_variant_skips_stage3(self):
        result = ev.run_ablation(tiny_grid(variants=["supervised"], seeds=[0]))
        assert len(result.rows) == 1

    def test_invalid_grid(self):
        with pytest.raises(ConfigError):
            tiny_grid(variants=["bert"])
        with pytest.raises(ConfigError):
            tiny_grid(seeds=[])


def crafted_result():
    rows = [
        MetricRow("mt", 50, 0, cr=93.0, dr=86.0, f1=91.0),
        MetricRow("mt", 50, 1, cr=94.4, dr=86.6, f1=92.4),
        MetricRow("fpmt", 50, 0, cr=93.7, dr=86.3, f1=91.7),
        MetricRow("fpmt", 50, 1, cr=93.7, dr=86.3, f1=91.7),
    ]
    return ev.AblationResult(rows=rows, failures=[])


class TestEmitReport:
    def test_markdown_cell_style(self, tmp_path):
        path = tmp_path / "table.md"
        ev.emit_report(crafted_result(), path, format="markdown")
        text = path.read_text()
        assert "| FPMT | 93.7/86.3/91.7 |" in text
        assert "| MT | 93.7/86.3/91.7 |" in text  # means of the two mt rows

    def test_missing_cell_rendered_as_dash(self, tmp_path):
        result = crafted_result()
        result.rows.append(MetricRow("pmt", 100, 0, cr=90.0, dr=80.0, f1=85.0))
        path = tmp_path / "table.md"
        ev.emit_report(result, path, format="markdown")
        lines = path.read_text().splitlines()
        pmt_line = next(l for l in lines if l.startswith("| PMT"))
        assert ev.EMPTY_CELL in pmt_line

    def test_csv_round_trip(self, tmp_path):
        result = crafted_result()
        path = tmp_path / "agg.csv"
        ev.emit_report(result, path, format="csv")
        parsed = ev.parse_aggregate_csv(path)
        assert parsed == result.aggregate()

    def test_deterministic_bytes(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            ev.emit_report(crafted_result(), tmp_path / name, format="csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_rows_csv(self, tmp_path):
        path = tmp_path / "rows.csv"
        ev.save_rows_csv(crafted_result().rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "variant,labels_per_class,seed,CR,DR,F1"
        assert len(lines) == 5

    def test_bad_format(self, tmp_path):
        with pytest.raises(ConfigError):
            ev.emit_report(crafted_result(), tmp_path / "x", format="html")


class TestSignTest:
    def test_exact_small_cases(self):
        assert ev.sign_test_p_value(5, 0) == pytest.approx(1 / 32)
        assert ev.sign_test_p_value(4, 1) == pytest.approx(6 / 32)
        assert ev.sign_test_p_value(0, 0) == 1.0
        assert ev.sign_test_p_value(7, 1) == pytest.approx(9 / 256)
