from __future__ import annotations

import pytest

from probe.dataset import Dataset, default_fixture_spec, generate_fixture


@pytest.fixture
def eight_cell_dataset() -> Dataset:
    """One item per condition cell, gender and number each split 50/50."""
    return generate_fixture(default_fixture_spec(per_cell=1), seed=7)


@pytest.fixture
def small_dataset() -> Dataset:
    """Four items per cell; 32 items total."""
    return generate_fixture(default_fixture_spec(per_cell=4), seed=11)
