import json

import numpy as np
import pytest

from synthforge.synthetic import build_backgrounds, build_library


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def dataset_inputs(tmp_path_factory):
    """A small asset library, three 640x480 backgrounds and a config file pointing at them."""
    root = tmp_path_factory.mktemp("inputs")
    rng = np.random.default_rng(2024)
    build_library(root / "lib", rng, classes=("quad", "hex"), per_class=4, size_range=(300, 900))
    build_backgrounds(root / "bg", rng, n=3)
    cfg = {"paths": {"assets": "lib", "backgrounds": "bg"}, "generate": {"master_seed": 11}}
    (root / "config.json").write_text(json.dumps(cfg))
    return root


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
