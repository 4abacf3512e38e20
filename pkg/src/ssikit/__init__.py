"""ssikit: corpus analytics for post-surgical clinical notes.

Submodules
----------
corpus    sectioned-note cohort model, JSONL IO, synthetic generator
tagger    dictionary tagging with negation and experiencer rules
lexicon   co-occurrence scoring and ranking of candidate terms
temporal  day-level concept distributions and co-occurrence pairs
dtree     decision-tree induction, pruning, and cross-validation
cli       command-line entry points (also via ``python -m ssikit``)
"""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Filesystem path of a shipped data fixture (see ssikit/data/)."""
    path = Path(str(resources.files("ssikit") / "data" / name))
    if not path.is_file():
        raise FileNotFoundError(f"no shipped data file named {name!r}")
    return path


__all__ = ["corpus", "tagger", "lexicon", "temporal", "dtree", "cli",
           "data_path", "__version__"]
