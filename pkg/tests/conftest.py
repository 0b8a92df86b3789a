import numpy as np
import pytest

from spxtrack.imaging import Frame
from spxtrack.synthetic import textured_frame


def write_p6(path, width, height, payload: bytes):
    path.write_bytes(f"P6\n{width} {height}\n255\n".encode() + payload)


@pytest.fixture
def small_frame():
    return textured_frame(32, 40, seed=5)


def random_frame(rng: np.random.Generator, h: int, w: int) -> Frame:
    return Frame(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))
