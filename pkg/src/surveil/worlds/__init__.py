"""World files shipped with the package (``ex1``, ``ex2``, ``ex3``)."""

from importlib import resources
from pathlib import Path

NAMES = ("ex1", "ex2", "ex3")


def path(name: str) -> Path:
    if name not in NAMES:
        raise KeyError(f"no shipped world {name!r}; known: {', '.join(NAMES)}")
    return Path(str(resources.files(__name__) / f"{name}.json"))
