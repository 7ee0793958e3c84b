"""
prenetctl Test Suite
====================

Tests for the tensor core, progressive networks, objectives, training loop,
data pipeline and command-line interface.

Test Categories:
- unit: Unit tests for individual components
- gradcheck: Finite-difference gradient checks
- config: Configuration and logging tests
- cli: Command-line tests through click's CliRunner
- integration: End-to-end runs across components
- slow: Desk-scale training runs (minutes on a CPU)

Usage:
    # Everything except the training runs
    pytest -m "not slow"

    # Run specific test categories
    pytest -m unit
    pytest -m gradcheck
    pytest -m cli

    # Run specific test file
    pytest tests/test_network.py -v
"""

import sys
from pathlib import Path

# Add the project root to Python path for imports
project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))
