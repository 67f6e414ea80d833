import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ccopf.case_io import load_bundled_case  # noqa: E402


@pytest.fixture(scope="session")
def toy():
    return load_bundled_case("case3")


@pytest.fixture(scope="session")
def case14():
    return load_bundled_case("case14")
