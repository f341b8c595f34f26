"""Structure inspection of the rendered three-panel figure."""

import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from tbfigures import FigureSpec, SchemaError, load_results, render
from tbfigures.cli import main

GOLDEN = Path(__file__).parent / "data" / "golden_sweep.csv"
ALL_METHODS = ["UE-CR", "UE-SB", "UE-TB", "WE-CR", "WE-SB", "WE-TB"]
SVG_NS = "{http://www.w3.org/2000/svg}"


def svg_axes_groups(path):
    root = ET.parse(path).getroot()
    return [
        g
        for g in root.iter(f"{SVG_NS}g")
        if g.attrib.get("id", "").startswith("axes_")
    ]


def svg_texts(path):
    root = ET.parse(path).getroot()
    return [t.text for t in root.iter(f"{SVG_NS}text") if t.text]


class TestGoldenFigure:
    def test_three_panels_six_curves(self, tmp_path):
        out = tmp_path / "fig.svg"
        summary = render(FigureSpec(GOLDEN, out))
        assert out.exists() and out.stat().st_size > 10_000
        assert summary["panels"] == 3
        for panel in ("bias", "variance", "mse"):
            assert summary["curves"][panel] == ALL_METHODS
        assert len(svg_axes_groups(out)) == 3
        texts = svg_texts(out)
        for method in ALL_METHODS:
            assert method in texts  # legend entries rendered as text

    def test_log_scale_labels(self, tmp_path):
        out = tmp_path / "fig.svg"
        render(FigureSpec(GOLDEN, out))
        texts = svg_texts(out)
        assert "|bias| (log scale)" in texts
        assert "variance (log scale)" in texts
        assert "MSE (log scale)" in texts

    def test_deterministic_bytes(self, tmp_path):
        out1, out2 = tmp_path / "a.svg", tmp_path / "b.svg"
        render(FigureSpec(GOLDEN, out1))
        render(FigureSpec(GOLDEN, out2))
        assert out1.read_bytes() == out2.read_bytes()


class TestSubsetAndEdgeCases:
    def subset_csv(self, tmp_path, keep=("WE-TB",)):
        lines = GOLDEN.read_text().splitlines()
        body = [
            line
            for line in lines[1:]
            if line.split(",")[3] in keep
        ]
        path = tmp_path / "subset.csv"
        path.write_text("\n".join([lines[0]] + body) + "\n")
        return path

    def test_single_method_tolerated(self, tmp_path):
        path = self.subset_csv(tmp_path)
        out = tmp_path / "one.svg"
        summary = render(FigureSpec(path, out))
        assert summary["curves"]["mse"] == ["WE-TB"]
        assert out.exists()

    def test_zero_bias_rows_dropped_with_note(self, tmp_path, capsys):
        lines = GOLDEN.read_text().splitlines()
        cells = lines[1].split(",")
        cells[8] = "0"  # bias column
        lines[1] = ",".join(cells)
        path = tmp_path / "zero.csv"
        path.write_text("\n".join(lines) + "\n")
        out = tmp_path / "zero.svg"
        summary = render(FigureSpec(path, out))
        assert summary["dropped_zero_bias"] == 1
        assert "dropped 1 zero-bias point" in capsys.readouterr().out
        assert out.exists()

    def test_schema_mismatch_names_columns(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(SchemaError, match="missing columns"):
            load_results(bad)


class TestCli:
    def test_render_figures_entry(self, tmp_path, capsys):
        out = tmp_path / "cli.svg"
        rc = main(["--input", str(GOLDEN), "--out", str(out), "--title", "sweep"])
        assert rc == 0
        assert out.exists()
        stdout = capsys.readouterr().out
        assert "panels=3" in stdout

    def test_schema_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        rc = main(["--input", str(bad), "--out", str(tmp_path / "o.svg")])
        assert rc == 2
        assert "missing columns" in capsys.readouterr().err
