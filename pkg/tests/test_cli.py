import csv
import io
import json

import pytest

from lusin.cli import main
from lusin.errors import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_VIOLATION


def test_verify_passes(quick_settings, capsys):
    assert main(["verify", "half-line", "--samples", "200", "--seed", "7"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["verdict"] == "pass"
    assert report["config"]["seed"] == 7


def test_broken_oracle_exits_with_violation(quick_settings, capsys):
    assert main(["verify", "squared-line", "--samples", "30"]) == EXIT_VIOLATION
    report = json.loads(capsys.readouterr().out)
    assert report["suites"][0]["details"]["worst"][0]["axiom"] == "triangle"


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "klein-bottle"],
        ["verify", "half-line", "--samples", "3"],
        ["verify", "half-line", "--eps", "0.1,-0.2"],
        ["stratify", "half-line"],
        ["compactify", "half-line", "-4"],
    ],
)
def test_configuration_errors(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert capsys.readouterr().err


def test_malformed_descriptor_is_a_configuration_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"domain": "rays", "branches": []}))
    assert main(["verify", str(path)]) == EXIT_CONFIG


def test_unwritable_output_is_an_io_error(quick_settings, tmp_path):
    target = tmp_path / "missing" / "report.json"
    assert main(["verify", "squared-line", "--samples", "20", "--out", str(target)]) == EXIT_IO


def test_csv_output_to_file(quick_settings, tmp_path, capsys):
    target = tmp_path / "report.csv"
    code = main(["verify", "half-line", "--samples", "100", "--format", "csv", "--out", str(target)])
    assert code == EXIT_OK
    assert capsys.readouterr().out == ""
    rows = list(csv.DictReader(io.StringIO(target.read_text())))
    assert len(rows) == 7
    assert {row["verdict"] for row in rows} == {"pass"}


def test_repeated_runs_write_identical_bytes(quick_settings, tmp_path):
    target = tmp_path / "report.json"
    argv = ["verify", "real-line", "--samples", "150", "--seed", "99", "--out", str(target)]
    assert main(argv) == EXIT_OK
    first = target.read_bytes()
    assert main(argv) == EXIT_OK
    assert target.read_bytes() == first


def test_repeated_runs_print_identical_bytes(quick_settings, capsys):
    argv = ["stratify", "figure-eight"]
    assert main(argv) == EXIT_OK
    first = capsys.readouterr().out
    assert main(argv) == EXIT_OK
    assert capsys.readouterr().out == first


def test_compactify_prints_the_metric_table(capsys):
    assert main(["compactify", "half-line", "2.5", "10.2"]) == EXIT_OK
    details = json.loads(capsys.readouterr().out)["suites"][0]["details"]
    assert details["delta"][0][1] == pytest.approx(14 / 33, abs=1e-12)


def test_report_archives_runs(quick_settings, tmp_path):
    url = f"sqlite:///{tmp_path / 'runs.db'}"
    argv = ["report", "lollipop", "--samples", "300", "--archive", url, "--out", str(tmp_path / "r.json")]
    assert main(argv) == EXIT_OK
    assert main(argv) == EXIT_OK

    from lusin.database import session_factory
    from lusin.models import RunRecord

    with session_factory(url)() as session:
        (record,) = session.query(RunRecord).all()
        assert record.runs == 2
        assert not record.drifted
        assert record.verdict == "pass"
