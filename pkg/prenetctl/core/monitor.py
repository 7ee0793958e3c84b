"""
Training throughput and memory monitoring
Tracks per-iteration wall time, loss and resident memory of the training process
"""

import json
import time
from collections import deque
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional

import psutil

from prenetctl.logging_config import get_logger

logger = get_logger('monitor')

BYTES_PER_MB = 1024 * 1024


@dataclass
class IterationMetrics:
    """Metrics for a single optimization step"""
    epoch: int
    iteration: int
    loss: float
    lr: float
    seconds: float
    rss_mb: float
    timestamp: str = None

    def __post_init__(self):
        if self.timestamp is None:
            self.timestamp = datetime.now().isoformat()


class IterationTracker:
    """Context manager timing one step; the loss is filled in by the caller"""

    def __init__(self, monitor: "TrainingMonitor", epoch: int, iteration: int, lr: float):
        self.monitor = monitor
        self.epoch = epoch
        self.iteration = iteration
        self.lr = lr
        self.loss = float('nan')
        self.start = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            self.monitor.add_iteration(IterationMetrics(
                epoch=self.epoch,
                iteration=self.iteration,
                loss=self.loss,
                lr=self.lr,
                seconds=time.perf_counter() - self.start,
                rss_mb=self.monitor.current_rss_mb(),
            ))


class TrainingMonitor:
    """Collect step metrics and optionally append them to a JSONL file"""

    def __init__(self, metrics_path: Optional[Path] = None, max_history: int = 1000):
        self.metrics_path = Path(metrics_path) if metrics_path else None
        self.history: deque = deque(maxlen=max_history)
        self.start_time = time.time()
        self.total_iterations = 0
        self.total_seconds = 0.0
        self.peak_rss_mb = 0.0
        self.process = psutil.Process()

    def current_rss_mb(self) -> float:
        try:
            return self.process.memory_info().rss / BYTES_PER_MB
        except psutil.Error as e:
            logger.debug(f"Cannot read process memory: {e}")
            return 0.0

    def track_iteration(self, epoch: int, iteration: int, lr: float) -> IterationTracker:
        return IterationTracker(self, epoch, iteration, lr)

    def add_iteration(self, metrics: IterationMetrics) -> None:
        self.history.append(metrics)
        self.total_iterations += 1
        self.total_seconds += metrics.seconds
        self.peak_rss_mb = max(self.peak_rss_mb, metrics.rss_mb)
        if self.metrics_path is not None:
            self._append(metrics)

    def _append(self, metrics: IterationMetrics) -> None:
        try:
            with open(self.metrics_path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(asdict(metrics)) + '\n')
        except OSError as e:
            logger.warning(f"Failed to write iteration metrics: {e}")

    def get_summary_stats(self) -> Dict:
        """Aggregate over everything recorded so far"""
        if not self.total_iterations:
            return {'no_data': True, 'uptime_seconds': time.time() - self.start_time}

        recent = list(self.history)[-10:]
        return {
            'uptime_seconds': time.time() - self.start_time,
            'iterations': self.total_iterations,
            'avg_iteration_seconds': self.total_seconds / self.total_iterations,
            'recent_iteration_seconds': sum(m.seconds for m in recent) / len(recent),
            'iterations_per_minute': 60.0 * self.total_iterations / self.total_seconds if self.total_seconds > 0 else 0.0,
            'peak_rss_mb': self.peak_rss_mb,
            'last_loss': self.history[-1].loss,
        }
