#!/usr/bin/env python3
"""
Test suite for prenetctl logging setup
"""

import json
import logging
import sys

import pytest

from prenetctl.core.monitor import IterationMetrics, TrainingMonitor
from prenetctl.logging_config import (METRICS_LOGGER, ROOT_LOGGER, ConsoleFormatter, JsonFormatter, get_logger,
                                      log_context, log_training_metrics, setup_logging)


@pytest.fixture(autouse=True)
def reset_loggers():
    yield
    for name in (ROOT_LOGGER, METRICS_LOGGER):
        logger = logging.getLogger(name)
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()


def _record(**extra):
    record = logging.LogRecord(ROOT_LOGGER, logging.INFO, __file__, 1, "step done", None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


@pytest.mark.unit
class TestFormatters:

    def test_console_includes_training_context(self):
        text = ConsoleFormatter().format(_record(epoch=3, iteration=40, loss=0.125, lr=2e-4))
        assert "step done" in text
        assert "Epoch: 3" in text and "Iter: 40" in text
        assert "Loss: 0.125000" in text and "LR: 2.00e-04" in text

    @pytest.mark.parametrize("show_tracebacks", [False, True])
    def test_console_tracebacks_only_when_requested(self, show_tracebacks):
        try:
            raise ValueError("bad pixel")
        except ValueError:
            record = logging.LogRecord(ROOT_LOGGER, logging.ERROR, __file__, 1, "Error: bad pixel", None,
                                       sys.exc_info())
        text = ConsoleFormatter(show_tracebacks=show_tracebacks).format(record)
        assert "Error: bad pixel" in text
        assert ("Traceback" in text) == show_tracebacks

    def test_json_carries_context_fields(self):
        data = json.loads(JsonFormatter().format(_record(epoch=1, image='a.png', event='training_metrics')))
        assert data['message'] == "step done"
        assert data['epoch'] == 1 and data['image'] == 'a.png'
        assert data['event'] == 'training_metrics'
        assert data['level'] == 'INFO'


@pytest.mark.unit
class TestSetupLogging:

    def test_console_only_by_default(self):
        logger = setup_logging({'log_level': 'WARNING'})
        assert logger.name == ROOT_LOGGER
        assert logger.level == logging.WARNING
        assert len(logger.handlers) == 1

    def test_verbose_forces_debug(self):
        assert setup_logging({'log_level': 'ERROR'}, verbose=True).level == logging.DEBUG

    def test_repeated_setup_does_not_stack_handlers(self):
        setup_logging({})
        assert len(setup_logging({}).handlers) == 1

    def test_file_logs_are_json(self, temp_dir):
        setup_logging({'log_dir': str(temp_dir / "logs"), 'log_level': 'INFO'})
        get_logger('trainer').info("hello", extra={'epoch': 2})
        log_training_metrics({'epoch': 2, 'iteration': 9, 'loss': 0.5, 'lr': 1e-3})
        for handler in logging.getLogger(ROOT_LOGGER).handlers + logging.getLogger(METRICS_LOGGER).handlers:
            handler.flush()

        main_line = (temp_dir / "logs" / "prenetctl.log").read_text().splitlines()[-1]
        assert json.loads(main_line)['logger'] == 'prenetctl.trainer'
        metrics = json.loads((temp_dir / "logs" / "prenetctl_metrics.log").read_text().splitlines()[-1])
        assert metrics['event'] == 'training_metrics' and metrics['iteration'] == 9

    def test_log_context_reports_errors(self, temp_dir):
        setup_logging({'log_file': str(temp_dir / "run.log")})
        logger = get_logger('derain')
        with pytest.raises(ValueError):
            with log_context(logger, image='x.png') as adapter:
                adapter.info("working")
                raise ValueError("bad pixel")
        for handler in logging.getLogger(ROOT_LOGGER).handlers:
            handler.flush()
        lines = [json.loads(line) for line in (temp_dir / "run.log").read_text().splitlines()]
        assert lines[0]['image'] == 'x.png'
        assert lines[-1]['error_type'] == 'ValueError'
        assert lines[-1]['exception']['message'] == 'bad pixel'


@pytest.mark.unit
class TestTrainingMonitor:

    def test_no_data_summary(self):
        assert TrainingMonitor().get_summary_stats()['no_data'] is True

    def test_tracks_iterations_and_writes_jsonl(self, temp_dir):
        monitor = TrainingMonitor(temp_dir / "steps.jsonl", max_history=2)
        for i in range(3):
            with monitor.track_iteration(epoch=0, iteration=i + 1, lr=1e-3) as tracker:
                tracker.loss = 1.0 / (i + 1)
        summary = monitor.get_summary_stats()
        assert summary['iterations'] == 3
        assert summary['last_loss'] == pytest.approx(1 / 3)
        assert summary['peak_rss_mb'] > 0
        assert len(monitor.history) == 2
        rows = [json.loads(line) for line in (temp_dir / "steps.jsonl").read_text().splitlines()]
        assert [row['iteration'] for row in rows] == [1, 2, 3]

    def test_failed_step_is_not_recorded(self):
        monitor = TrainingMonitor()
        with pytest.raises(RuntimeError):
            with monitor.track_iteration(0, 1, 1e-3):
                raise RuntimeError("diverged")
        assert monitor.total_iterations == 0

    def test_add_iteration_directly(self):
        monitor = TrainingMonitor()
        monitor.add_iteration(IterationMetrics(epoch=0, iteration=1, loss=0.5, lr=1e-3, seconds=2.0, rss_mb=10.0))
        summary = monitor.get_summary_stats()
        assert summary['iterations_per_minute'] == pytest.approx(30.0)
        assert summary['peak_rss_mb'] == 10.0
