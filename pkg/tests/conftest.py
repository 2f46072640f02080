import pytest

from kbmemn2n.dialoggen import GenConfig, generate_corpus


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(GenConfig(seed=3, train=20, validation=5, test=5))


@pytest.fixture(scope="session")
def dstc_corpus():
    return generate_corpus(GenConfig(seed=4, train=20, validation=5, test=5, mode="dstc"))
