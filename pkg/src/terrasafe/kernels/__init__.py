"""Ray-march kernel backends.

The compiled Cython extension is preferred; the numpy lockstep
implementation is the fallback when the extension was not built. Both
implement the same algorithm and produce the same hits.
"""

from . import march_py

try:
    from . import _march as _compiled
    HAVE_COMPILED = True
except ImportError:  # extension not built; pure-python install
    _compiled = None
    HAVE_COMPILED = False

BACKEND = "compiled" if HAVE_COMPILED else "numpy"


def get_march(backend: str = "auto"):
    """Resolve a march function by backend name."""
    if backend == "auto":
        backend = BACKEND
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernel requested but not built")
        return _compiled.march
    if backend == "numpy":
        return march_py.march
    raise ValueError(f"unknown backend {backend!r}")


march = get_march()
