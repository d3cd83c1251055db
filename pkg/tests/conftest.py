import pytest

from gradectl import synthetic
from gradectl.corpus import load_conllu, load_dataset, load_lexicon
from gradectl.strategies import Resources

SMALL_SIZES = {"train": 240, "dev": 30, "test": 60}


@pytest.fixture(scope="session")
def lexicons():
    return synthetic.make_lexicons(seed=0)


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    """Paths of a small synthetic corpus written once per session."""
    out = tmp_path_factory.mktemp("fixture")
    return synthetic.write_fixture(out, seed=0, sizes=SMALL_SIZES)


@pytest.fixture(scope="session")
def small_resources(small_fixture):
    return Resources(
        load_lexicon(small_fixture["freq"], "frequency_rank"),
        load_lexicon(small_fixture["aoa"], "age_of_acquisition"),
        load_conllu(small_fixture["conllu"]),
    )


@pytest.fixture(scope="session")
def small_records(small_fixture):
    return {split: load_dataset(small_fixture[split]) for split in SMALL_SIZES}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
