"""Hot-loop backend: the compiled ``_core`` extension when importable, else ``_pure``.

Set ``SPXTRACK_PURE=1`` to force the pure-Python twin.
"""
import os

from . import _pure

if os.environ.get("SPXTRACK_PURE", "") not in ("", "0"):
    backend = _pure
    BACKEND = "pure"
else:
    try:
        from . import _core as backend
        BACKEND = "compiled"
    except ImportError:  # extension not built
        backend = _pure
        BACKEND = "pure"

slic_assign = backend.slic_assign
connected_components = backend.connected_components
grow_tree = backend.grow_tree
apply_tree = backend.apply_tree
knn_query = backend.knn_query
