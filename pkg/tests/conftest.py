import json
from importlib import resources

import pytest

import germapprox as ga


def _load(name):
    with resources.as_file(resources.files("germapprox") / "corpus" / name) as p:
        return ga.load_collection(p)


@pytest.fixture(scope="session")
def curves():
    return _load("curves.json")


@pytest.fixture(scope="session")
def surfaces():
    return _load("surfaces.json")


@pytest.fixture(scope="session")
def loj():
    return _load("loj.json")


@pytest.fixture(scope="session")
def shared_cache():
    """One cache for the whole session; slices are deterministic, so reuse
    across tests only saves time."""
    return ga.SliceCache()


@pytest.fixture()
def fresh_cache():
    return ga.SliceCache()


@pytest.fixture(scope="session")
def quick_config():
    return ga.CompareConfig(schedule=ga.RadiiSchedule(0.25), npoints=256,
                            seed=0)


def make_collection(text_or_doc):
    if isinstance(text_or_doc, dict):
        text_or_doc = json.dumps(text_or_doc)
    return ga.collection_from_text(text_or_doc)
