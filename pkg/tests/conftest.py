import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

from mathsynth.verify import ExecutionLimits  # noqa: E402


@pytest.fixture(scope="session")
def stub_runner() -> str:
    return str(TESTS_DIR / "support" / "stub_runner.py")


@pytest.fixture(scope="session")
def fast_limits() -> ExecutionLimits:
    return ExecutionLimits(timeout_s=5.0)


@pytest.fixture(scope="session")
def fixture_files(tmp_path_factory):
    """One raw dataset file per source, written once per session."""
    from support.corpora import write_all

    directory = tmp_path_factory.mktemp("fixture-corpora")
    return write_all(directory, per_source=30)


@pytest.fixture(scope="session")
def fixture_problems(fixture_files):
    from mathsynth.corpus import Source, load_dataset

    problems = {}
    for source_value, path in fixture_files.items():
        problems[source_value] = load_dataset(
            path, Source(source_value), id_prefix=source_value
        )
    return problems
