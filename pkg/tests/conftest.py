import os

import pytest

from wallprobe.pipeline import Dataset, SimConfig, generate_dataset

# long-running acceptance artefacts (desk dataset, trained bundles) live here between runs
CACHE = os.environ.get("WALLPROBE_CACHE", os.path.join(os.path.dirname(os.path.dirname(__file__)), ".cache"))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Eight simulated walls, two of each type."""
    root = str(tmp_path_factory.mktemp("tiny") / "ds")
    generate_dataset(root, limit=8, config=SimConfig())
    return Dataset(root)


# acceptance outcomes, printed once at the end of the run
ACCEPTANCE = []


@pytest.fixture
def criterion():
    def record(number, label, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {number} [{label}]: {status} {detail}".rstrip()
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
