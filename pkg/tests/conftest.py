"""Shared pytest options: long acceptance runs only execute with ``--runslow``."""

from __future__ import annotations

import pytest


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run long acceptance experiments",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="long acceptance run; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
