import numpy as np
import pytest
import torch

from fewshot_flame.dataset import TransformConfig, generate_synthetic_dataset

TINY_INPUT = 24


@pytest.fixture(scope="session")
def tiny_ds():
    """Six classes, 10/6/4 per split, small portrait images."""
    return generate_synthetic_dataset(6, (10, 6, 4), "easy", seed=3, image_size=(40, 32))


@pytest.fixture(scope="session")
def tiny_cfg():
    return TransformConfig(input_size=TINY_INPUT)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
