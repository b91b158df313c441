from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-minute training runs")


@pytest.fixture(scope="session")
def crop64():
    from doh.signals import load_image
    return load_image(DATA_DIR / "crop64.png")
