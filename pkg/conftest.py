import pytest


@pytest.fixture
def out_dir(tmp_path):
    """Output directory for the scenario functions in test_all.py."""
    return str(tmp_path)
