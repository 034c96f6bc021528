"""Shared helpers: loading the bundled worked problems."""

import pathlib

import pytest

from fracstab.cli import ProblemFile, load_problem

ROOT = pathlib.Path(__file__).resolve().parent.parent
PROBLEMS = ROOT / "problems"


def load_example(index: int) -> ProblemFile:
    return load_problem(str(PROBLEMS / f"example{index}.json"))


@pytest.fixture(scope="session")
def problems_dir() -> pathlib.Path:
    return PROBLEMS
