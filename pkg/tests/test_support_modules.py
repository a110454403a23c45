import json
import logging
import math

import numpy as np
import pytest

from alpha_discrepancy.contract import check_estimate, estimator_contract, log_run_event
from alpha_discrepancy.exceptions import (
    AllPointsSkippedError,
    DataParseError,
    DomainError,
    UsageError,
)
from alpha_discrepancy.models import (
    DiscrepancyEstimate,
    DiscrepancyRunConfig,
    EmbedRunConfig,
    Theorem6Row,
    Variant,
)
from alpha_discrepancy.monitor import DegeneracyMonitor
from alpha_discrepancy.reports import (
    THEOREM6_COLUMNS,
    build_report,
    format_float,
    matrix_csv,
    render_csv,
    render_json,
    theorem6_csv,
)
from alpha_discrepancy.step_control import StepController
from alpha_discrepancy.validator import load_data_csv, validate_run_config


def estimate(value, std_error=0.1, variant=Variant.EMPIRICAL_R_EQ_P):
    return DiscrepancyEstimate(
        value=value, std_error=std_error, m=10, n=100, alpha=1.0, variant=variant, seed=0
    )


def event_records(caplog, event_type):
    events = []
    for record in caplog.records:
        try:
            payload = json.loads(record.getMessage())
        except ValueError:
            continue
        if payload.get("event_type") == event_type:
            events.append(payload)
    return events


def test_step_controller_halves_on_rejection():
    """Rejections halve; adaptive acceptances grow back up to the initial step."""
    controller = StepController("adaptive", 1.0, growth=2.0)
    assert controller.adjust(False) == 0.5
    assert controller.adjust(False) == 0.25
    assert controller.consecutive_rejections == 2
    assert controller.adjust(True) == 0.5
    assert controller.adjust(True) == 1.0
    assert controller.adjust(True) == 1.0
    assert controller.consecutive_acceptances == 3


def test_fixed_step_controller_never_grows():
    """Fixed mode only shrinks."""
    controller = StepController("fixed", 2.0)
    controller.adjust(False)
    assert controller.adjust(True) == 1.0
    assert controller.get_step() == 1.0


def test_step_controller_exhaustion():
    """Repeated halving eventually drops below the minimum step."""
    controller = StepController("adaptive", 1.0)
    for _ in range(39):
        controller.adjust(False)
    assert not controller.exhausted
    controller.adjust(False)
    assert controller.exhausted


def test_step_controller_validation():
    """Unknown modes and non-positive steps are rejected."""
    with pytest.raises(DomainError, match="unknown step mode"):
        StepController("wild", 1.0)
    with pytest.raises(DomainError, match="positive"):
        StepController("fixed", 0.0)


def test_monitor_status_transitions():
    """healthy -> degraded -> failed as points are skipped."""
    monitor = DegeneracyMonitor(2, "empirical-rp")
    assert monitor.get_status()["status"] == "healthy"
    assert monitor.record_skip(0, "densities underflow") == "degraded"
    monitor.check()
    assert monitor.skipped_points == 1
    assert monitor.record_skip(1, "densities underflow") == "failed"
    with pytest.raises(AllPointsSkippedError, match="all 2 reference points"):
        monitor.check()

    status = monitor.get_status()
    assert status["skipped_points"] == 2
    assert [entry["index"] for entry in status["skipped"]] == [0, 1]

    monitor.reset()
    assert monitor.status == "healthy"
    assert monitor.skipped_points == 0


def test_monitor_logs_skips(caplog):
    """Every skip is logged as a warning."""
    caplog.set_level(logging.WARNING, logger="alpha_discrepancy.monitor")
    DegeneracyMonitor(5, "empirical-rq").record_skip(3, "non-finite divergence")
    assert "skipped reference point 3" in caplog.text


def test_check_estimate_allows_noise():
    """Small negative values within three standard errors pass."""
    assert check_estimate(estimate(0.2))
    assert check_estimate(estimate(-0.25, std_error=0.1))
    assert not check_estimate(estimate(-0.35, std_error=0.1))
    assert not check_estimate(estimate(-1e-3, std_error=0.0, variant=Variant.CLOSED_FORM))


def test_check_estimate_warns(caplog):
    """A violation is logged, not raised."""
    caplog.set_level(logging.WARNING, logger="alpha_discrepancy.contract")
    check_estimate(estimate(-1.0))
    assert "is below" in caplog.text


def test_log_run_event_is_json(caplog):
    """One JSON object per log line."""
    caplog.set_level(logging.INFO, logger="alpha_discrepancy.contract")
    log_run_event("test", {"value": 1.5, "array": np.float64(2.0)})
    (event,) = event_records(caplog, "test")
    assert event["data"]["value"] == 1.5
    assert "timestamp" in event


def test_estimator_contract_logs_an_event(caplog):
    """Decorated estimators emit a structured estimate event."""
    caplog.set_level(logging.INFO, logger="alpha_discrepancy.contract")

    @estimator_contract
    def fake_estimator():
        return estimate(-5.0)

    result = fake_estimator()
    assert result.value == -5.0
    (event,) = event_records(caplog, "estimate")
    assert event["data"]["estimator"] == "fake_estimator"
    assert event["data"]["nonnegative_within_noise"] is False
    assert event["data"]["variant"] == "empirical-rp"


def test_format_float_round_trips():
    """Seventeen significant digits read back to the same double."""
    for value in (0.1, 1.0 / 3.0, 0.0965735902799727, 1e-300, -2.5e17):
        assert float(format_float(value)) == value
    assert format_float(math.inf) == "inf"
    assert format_float(-math.inf) == "-inf"
    assert format_float(math.nan) == "nan"


def test_render_csv_cells():
    """Booleans, integers and floats each have one spelling."""
    text = render_csv(["a", "b", "c"], [[1, 0.5, True], [np.int64(2), np.float64(0.25), "x"]])
    assert text == "a,b,c\n1,0.5,true\n2,0.25,x\n"
    assert matrix_csv(np.array([[1.0, 2.0], [3.0, 4.0]])) == "y0,y1\n1,2\n3,4\n"


def test_render_json_keeps_insertion_order():
    """Reports are stable text."""
    text = render_json({"b": 1, "a": [1.5, 2]})
    assert text.endswith("\n")
    assert list(json.loads(text)) == ["b", "a"]


def test_build_report_carries_the_config():
    """The resolved configuration travels with every result."""
    config = DiscrepancyRunConfig(map="identity-2d", alpha=0.5)
    report = build_report(config, {"value": 0.0})
    assert report["config"]["map"] == "identity-2d"
    assert report["config"]["variant"] == "closed"
    assert report["result"] == {"value": 0.0}


def test_theorem6_csv_columns():
    """Rows follow the fixed column order."""
    row = Theorem6Row(
        n=128,
        sne_cost_fitted_residual=0.015625,
        closed_form_value=0.5,
        seed=3,
        sne_cost_mean=0.5625,
        slope=1.0,
        offset=0.0625,
    )
    lines = theorem6_csv([row]).splitlines()
    assert lines[0] == ",".join(THEOREM6_COLUMNS)
    assert lines[1] == "128,0.015625,0.5,3,0.5625,1,0.0625"


def test_load_data_csv(tmp_path):
    """A header row is optional and blank lines are skipped."""
    path = tmp_path / "data.csv"
    path.write_text("x,y\n1,2\n\n3.5, -4\n", encoding="utf-8")
    np.testing.assert_array_equal(load_data_csv(path), [[1.0, 2.0], [3.5, -4.0]])
    path.write_text("1,2\n3,4\n", encoding="utf-8")
    assert load_data_csv(path).shape == (2, 2)


@pytest.mark.parametrize(
    "text, match",
    [
        ("1,2\n3\n", "row 2: expected 2 columns, found 1"),
        ("1,2\n3,abc\n", "row 2: not a decimal number: 'abc'"),
        ("1,2\nnan,4\n", "row 2: non-finite value"),
        ("x,y\n", "holds no data rows"),
    ],
)
def test_load_data_csv_errors(tmp_path, text, match):
    """Malformed data names the row."""
    path = tmp_path / "bad.csv"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(DataParseError, match=match):
        load_data_csv(path)


def test_load_data_csv_missing_file(tmp_path):
    """Unreadable files are parse errors."""
    with pytest.raises(DataParseError, match="cannot read"):
        load_data_csv(tmp_path / "missing.csv")


def test_validate_run_config():
    """Pydantic failures become usage errors naming the field."""
    config = validate_run_config(EmbedRunConfig, {"input": "x.csv", "perplexity": 5.0, "seed": 1})
    assert config.kernel == "student"
    with pytest.raises(UsageError, match="perplexity"):
        validate_run_config(EmbedRunConfig, {"input": "x.csv", "perplexity": 0.5, "seed": 1})
    with pytest.raises(UsageError, match="exactly one of --map or --weights"):
        validate_run_config(DiscrepancyRunConfig, {"alpha": 1.0})
    with pytest.raises(UsageError, match="unknown kernel"):
        validate_run_config(
            DiscrepancyRunConfig, {"map": "identity-2d", "alpha": 1.0, "kernel": "cauchy"}
        )
