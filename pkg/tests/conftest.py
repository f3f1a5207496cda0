import numpy as np
import pytest

from hallnav.imaging import GrayImage

FIXTURES = None  # resolved lazily so the package can move


@pytest.fixture(scope="session")
def maps_dir():
    from pathlib import Path

    return Path(__file__).resolve().parent.parent / "fixtures" / "maps"


def gray(rows) -> GrayImage:
    """Build a GrayImage from a nested list of ints."""
    a = np.asarray(rows, dtype=np.uint8)
    return GrayImage.from_array(a)


@pytest.fixture
def step_image() -> GrayImage:
    """32x32 vertical step: left half 0, right half 255."""
    a = np.zeros((32, 32), dtype=np.uint8)
    a[:, 16:] = 255
    return GrayImage.from_array(a)
