"""Geo-context-aware FaaS platform: geometry, broker registry, and the
deterministic scenario harness (mobility, overload offloading, edge outage)."""

try:
    from ._core import *  # noqa: F401,F403  (installed wheel layout)
    from . import _core as _core_module
except ImportError:  # in-tree builds place _core next to the package directory
    from _core import *  # type: ignore  # noqa: F401,F403
    import _core as _core_module

__version__ = "0.1.0"
__all__ = [name for name in dir(_core_module) if not name.startswith("_")]
