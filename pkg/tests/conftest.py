import numpy as np
import pytest
from PIL import Image

from minder.imagio import ImageTensor, to_uint8

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def rng(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def random_image(seed: int, size=(8, 8)) -> ImageTensor:
    return ImageTensor(rng(seed).random((size[0], size[1], 3)))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Tiny labeled corpus on disk: 8 real + 8 fake (two tagged sources)."""
    import synthcorpus

    root = tmp_path_factory.mktemp("small_corpus")
    for sub in ("real", "fake/texgen", "fake/blobgen"):
        (root / sub).mkdir(parents=True)
    reals = synthcorpus.real_images(8)
    tex = synthcorpus.fake_images("texture_strong", 4)
    sat = synthcorpus.fake_images("saturation", 4)
    for i, img in enumerate(reals):
        Image.fromarray(to_uint8(img)).save(root / "real" / f"r{i:02d}.png")
    for i, img in enumerate(tex):
        Image.fromarray(to_uint8(img)).save(root / "fake" / "texgen" / f"t{i:02d}.png")
    for i, img in enumerate(sat):
        Image.fromarray(to_uint8(img)).save(root / "fake" / "blobgen" / f"b{i:02d}.png")
    return root
