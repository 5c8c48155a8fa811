"""Small bundled fixtures: a four-node diamond, the question-800 graph and the GRIN2 graph."""
from importlib import resources
from pathlib import Path

FILES = {
    "g4": "g4.tsv",
    "qid800_graph": "qid800_graph.tsv",
    "qid800_benchmark": "qid800_benchmark.json",
    "grin2_graph": "grin2_graph.tsv",
    "grin2_benchmark": "grin2_benchmark.json",
}


def path(name: str) -> Path:
    """Filesystem path of a bundled fixture by short name (see ``FILES``)."""
    try:
        fname = FILES[name]
    except KeyError:
        raise KeyError(f"unknown dataset {name!r}; choose from {sorted(FILES)}") from None
    return Path(str(resources.files(__name__).joinpath(fname)))
