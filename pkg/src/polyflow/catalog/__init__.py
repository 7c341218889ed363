"""Built-in polytope catalog, shipped as JSON vertex lists."""
from functools import lru_cache
from importlib import resources

from ..polytope import polytope_from_json

SIMPLE = ("segment", "square", "cube3", "cube4", "simplex2", "simplex3",
          "simplex4", "square_x_segment", "dodecahedron")
NON_SIMPLE = ("square_pyramid", "icosahedron")
NAMES = SIMPLE + NON_SIMPLE


def catalog_text(name):
    return resources.files(__name__).joinpath(f"{name}.json").read_text()


@lru_cache(maxsize=None)
def load(name):
    if name not in NAMES:
        raise KeyError(f"unknown catalog polytope {name!r}; known: {', '.join(NAMES)}")
    return polytope_from_json(catalog_text(name))
