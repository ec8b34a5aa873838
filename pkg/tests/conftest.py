"""Shared fixtures: the bundled dataset is generated once per session."""

from pathlib import Path

import pytest

from gridstudy.synthdata import generate_dataset

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    target = tmp_path_factory.mktemp("dataset")
    generate_dataset(target)
    return target


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR


def config_path(scenario: int) -> Path:
    return CONFIG_DIR / f"scenario{scenario}.ini"
