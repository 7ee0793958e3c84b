"""
Logging configuration for prenetctl
Console logging to stderr plus optional structured JSON file logs and a
metrics stream for training iterations
"""

import logging
import logging.handlers
import json
import sys
from pathlib import Path
from datetime import datetime
from typing import Dict, Any

ROOT_LOGGER = 'prenetctl'
METRICS_LOGGER = 'prenetctl.metrics'

# Record attributes surfaced by both formatters
CONTEXT_FIELDS = ('stage', 'epoch', 'iteration', 'loss', 'lr', 'elapsed',
                  'image', 'checkpoint', 'rss_mb', 'error_type')


class ConsoleFormatter(logging.Formatter):
    """Human-readable formatter with level indicators

    Tracebacks are appended to ERROR records only when show_tracebacks is set
    (verbose runs); the JSON file log always carries them.
    """

    LEVEL_EMOJIS = {
        'DEBUG': '🔍',
        'INFO': '📝',
        'WARNING': '⚠️',
        'ERROR': '❌',
        'CRITICAL': '🚨'
    }

    def __init__(self, show_tracebacks: bool = False):
        super().__init__()
        self.show_tracebacks = show_tracebacks

    def format(self, record):
        emoji = self.LEVEL_EMOJIS.get(record.levelname, '📝')
        timestamp = datetime.fromtimestamp(record.created).strftime('%H:%M:%S')
        formatted_msg = f"{timestamp} | {emoji} | {record.getMessage()}"

        if hasattr(record, 'epoch'):
            formatted_msg += f" | Epoch: {record.epoch}"
        if hasattr(record, 'iteration'):
            formatted_msg += f" | Iter: {record.iteration}"
        if hasattr(record, 'loss'):
            formatted_msg += f" | Loss: {record.loss:.6f}"
        if hasattr(record, 'lr'):
            formatted_msg += f" | LR: {record.lr:.2e}"
        if hasattr(record, 'elapsed'):
            formatted_msg += f" | Time: {record.elapsed:.2f}s"
        if hasattr(record, 'image'):
            formatted_msg += f" | Image: {record.image}"

        if self.show_tracebacks and record.exc_info and record.levelno >= logging.ERROR:
            formatted_msg += "\n" + self.formatException(record.exc_info)
        return formatted_msg


class JsonFormatter(logging.Formatter):
    """JSON formatter for structured logging"""

    def format(self, record):
        log_data = {
            'timestamp': datetime.fromtimestamp(record.created).isoformat(),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno
        }

        for field in CONTEXT_FIELDS + ('event',):
            if hasattr(record, field):
                log_data[field] = getattr(record, field)

        if record.exc_info:
            log_data['exception'] = {
                'type': record.exc_info[0].__name__,
                'message': str(record.exc_info[1]),
                'traceback': self.formatException(record.exc_info)
            }

        return json.dumps(log_data, default=str)


class ContextLogAdapter(logging.LoggerAdapter):
    """Adapter that merges a fixed context into every record"""

    def process(self, msg, kwargs):
        extra = kwargs.get('extra', {})
        extra.update(self.extra)
        kwargs['extra'] = extra
        return msg, kwargs


def setup_logging(config: Dict, verbose: bool = False) -> logging.Logger:
    """Configure the prenetctl logger tree from a config mapping"""

    log_level = str(config.get('log_level', 'INFO')).upper()
    if verbose:
        log_level = 'DEBUG'
    log_file = config.get('log_file')
    log_dir = config.get('log_dir')

    if not log_file and log_dir:
        log_file = Path(log_dir) / 'prenetctl.log'

    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(getattr(logging, log_level, logging.INFO))
    logger.propagate = False

    # Clear existing handlers
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    # stdout is reserved for command results
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    console_handler.setFormatter(ConsoleFormatter(show_tracebacks=verbose))
    logger.addHandler(console_handler)

    metrics_logger = logging.getLogger(METRICS_LOGGER)
    for handler in list(metrics_logger.handlers):
        metrics_logger.removeHandler(handler)
        handler.close()
    metrics_logger.propagate = False
    metrics_logger.setLevel(logging.INFO)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.handlers.RotatingFileHandler(
            log_path,
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setLevel(getattr(logging, log_level, logging.INFO))
        if config.get('json_logs', True):
            file_handler.setFormatter(JsonFormatter())
        else:
            file_handler.setFormatter(ConsoleFormatter())
        logger.addHandler(file_handler)

        metrics_handler = logging.handlers.RotatingFileHandler(
            log_path.parent / 'prenetctl_metrics.log',
            maxBytes=20*1024*1024,  # 20MB for metrics
            backupCount=3,
            encoding='utf-8'
        )
        metrics_handler.setFormatter(JsonFormatter())
        metrics_logger.addHandler(metrics_handler)
    else:
        metrics_logger.addHandler(logging.NullHandler())

    return logger


def get_logger(name: str = None) -> logging.Logger:
    """Get a logger instance for a specific module"""
    if name:
        return logging.getLogger(f'{ROOT_LOGGER}.{name}')
    return logging.getLogger(ROOT_LOGGER)


def log_error_with_context(logger: logging.Logger, error: Exception, context: Dict[str, Any]):
    """Log an error with comprehensive context"""
    logger.error(
        f"Error: {error}",
        exc_info=True,
        extra={
            'error_type': type(error).__name__,
            'event': 'error',
            **context
        }
    )


def log_training_metrics(metrics: Dict[str, Any]):
    """Send one training metrics record to the metrics stream"""
    logging.getLogger(METRICS_LOGGER).info(
        "Training metrics",
        extra={'event': 'training_metrics', **metrics}
    )


class LogContext:
    """Context manager for adding context to all log messages"""

    def __init__(self, logger: logging.Logger, **context):
        self.logger = logger
        self.context = context
        self.adapter = ContextLogAdapter(logger, context)

    def __enter__(self):
        return self.adapter

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type:
            log_error_with_context(self.logger, exc_val, self.context)


def log_context(logger: logging.Logger, **context):
    """Create a logging context manager"""
    return LogContext(logger, **context)
