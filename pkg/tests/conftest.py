import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

FIXTURES = HERE / "fixtures"


@pytest.fixture
def fixture_hex():
    def load(name):
        return bytes.fromhex((FIXTURES / name).read_text().strip())

    return load
