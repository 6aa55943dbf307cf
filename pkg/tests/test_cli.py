"""
Tests for the command line interface
"""
import json
import os

import pytest
from click.testing import CliRunner
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from mvtlab import database
from mvtlab.cli import EXIT_CAPACITY, EXIT_PRECONDITION, EXIT_VIOLATED, cli
from mvtlab.config import DATA_DIR
from mvtlab.models import CountRecord, LadderRun
from mvtlab.presets import SystemTemplate
from mvtlab.services import CounterService


@pytest.fixture
def runner():
    return CliRunner()


class TestCLI:
    """Test CLI commands"""

    def test_presets(self, runner):
        """Test the preset table lists every preset"""
        result = runner.invoke(cli, ["presets"])
        assert result.exit_code == 0
        assert "n8" in result.output
        assert "bilinear-n3" in result.output
        assert "Citation" in result.output

    def test_count_matches_library(self, runner):
        """Test the CLI count equals the library count"""
        result = runner.invoke(cli, ["count", "--preset", "i6", "--lambda-exp=-3", "--N", "64"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        expected = CounterService(workers=1).count(SystemTemplate.build("i6", {"lambda": "N^-3"}).resolve(64))
        assert report["count"] == expected.count
        assert report["report_version"] == 1
        assert report["diagonal"] <= report["count"]
        assert report["claimed_exponent"] == "3"

    def test_unknown_preset(self, runner):
        """Test an unknown preset exits with the precondition code"""
        result = runner.invoke(cli, ["count", "--preset", "n9", "--N", "32"])
        assert result.exit_code == EXIT_PRECONDITION
        assert "unknown preset" in result.output

    def test_preset_and_spec_file(self, runner):
        result = runner.invoke(cli, ["count", "--preset", "n8", "--spec-file", "x.env", "--N", "32"])
        assert result.exit_code == EXIT_PRECONDITION

    def test_spec_file(self, runner):
        """Test counting from a key = value spec file"""
        path = os.path.join(DATA_DIR, "specs", "n8.env")
        result = runner.invoke(cli, ["count", "--spec-file", path, "--N", "16"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["preset"] == "n8"

    def test_capacity_exit(self, runner):
        """Test a tiny budget exits with the capacity code"""
        result = runner.invoke(cli, ["count", "--preset", "n8", "--N", "32", "--budget", "1000"])
        assert result.exit_code == EXIT_CAPACITY
        assert "budget=1000" in result.output

    def test_report_files(self, runner, tmp_path):
        """Test reports are stable and timestamps go to the side file"""
        out = str(tmp_path / "count.json")
        args = ["count", "--preset", "exact-12", "--N", "32", "--output", out]
        assert runner.invoke(cli, args).exit_code == 0
        with open(out) as fh:
            first = fh.read()
        assert runner.invoke(cli, args).exit_code == 0
        with open(out) as fh:
            assert fh.read() == first
        assert "generated_at" not in first
        with open(out + ".meta.json") as fh:
            assert "generated_at" in json.load(fh)

    def test_csv(self, runner, tmp_path):
        path = str(tmp_path / "rows.csv")
        result = runner.invoke(cli, ["ladder", "--preset", "exact-12", "--ladder", "32,64,128", "--csv", path])
        assert result.exit_code == 0, result.output
        with open(path) as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "N,log2 N,count,log2 count"
        assert len(lines) == 4

    def test_ladder(self, runner):
        """Test a ladder run reports its slope and verdict"""
        result = runner.invoke(cli, ["ladder", "--preset", "exact-12", "--ladder", "32,64,128"])
        assert result.exit_code == 0, result.output
        assert "verdict=consistent" in result.output

    def test_bad_ladder(self, runner):
        result = runner.invoke(cli, ["ladder", "--preset", "exact-12", "--ladder", "32,16,64"])
        assert result.exit_code == EXIT_PRECONDITION

    def test_weyl(self, runner):
        result = runner.invoke(cli, ["weyl", "--N", "64", "--pairs", "1/3,1/7"])
        assert result.exit_code == 0, result.output
        assert len(json.loads(result.output)["rows"]) == 2

    def test_vdc(self, runner):
        result = runner.invoke(cli, ["vdc", "--N", "64", "--D", "8,16"])
        assert result.exit_code == 0, result.output
        assert [r["D"] for r in json.loads(result.output)["rows"]] == [8, 16]

    def test_geom(self, runner):
        """Test the geometry scan of (t^2, t^3)"""
        result = runner.invoke(cli, ["geom", "--curve", "cubic", "--grid", "6"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["scan"]["degenerate"] is False
        assert report["identity"]["violated"] is False

    def test_geom_unknown_curve(self, runner):
        result = runner.invoke(cli, ["geom", "--curve", "helix"])
        assert result.exit_code == EXIT_PRECONDITION

    def test_record_concurrent_ladder(self, runner, tmp_path, monkeypatch):
        """Test --record with several workers stores every ladder point"""
        engine = create_engine(f"sqlite:///{tmp_path / 'runs.db'}")
        monkeypatch.setattr(database, "engine", engine)
        args = ["ladder", "--preset", "exact-12", "--ladder", "32,64,128,256", "--record", "--workers", "4"]
        result = runner.invoke(cli, args)
        assert result.exit_code == 0, result.output
        session = sessionmaker(bind=engine)()
        assert session.query(CountRecord).count() == 4
        assert session.query(LadderRun).one().ladder_values() == [32, 64, 128, 256]
        session.close()
        engine.dispose()

    def test_violated_exit(self, runner, tmp_path):
        """Test a claim below the measured slope exits with the violated code"""
        path = tmp_path / "low.env"
        path.write_text('p=4\nterms="1; 2"\nclaimed="1"\n')
        result = runner.invoke(cli, ["ladder", "--spec-file", str(path), "--ladder", "32,64,128"])
        assert result.exit_code == EXIT_VIOLATED, result.output
        assert "verdict=violated" in result.output

    def test_interchange_reports_systems(self, runner):
        """Test the interchange report carries all three resolved systems"""
        result = runner.invoke(cli, ["interchange", "--N", "32", "--delta-exp=-9/5"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        systems = report["systems"]
        assert sorted(systems) == ["base", "coarse", "narrow"]
        assert systems["base"]["s"] == 5
        base, coarse = systems["base"]["windowed_forms"], systems["coarse"]["windowed_forms"]
        assert coarse[0]["tolerance"] == pytest.approx(4 * base[0]["tolerance"])

    def test_lowerbound_reports_systems(self, runner):
        """Test the lower-bound report shows the restricted window as a system"""
        result = runner.invoke(cli, ["lowerbound", "--N", "24", "--delta-exp=-3/2", "--Delta-exp=-1"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["M"] == 11
        restricted = report["systems"]["restricted"]
        assert restricted["groups"][0]["interval"] == [13, 23]
        assert report["systems"]["full"]["groups"][0]["interval"] == [13, 24]
