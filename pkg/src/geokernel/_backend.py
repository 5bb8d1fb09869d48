"""Select the compiled core if it imports, else the numpy fallback.

Set ``GEOKERNEL_PURE=1`` to force the fallback.
"""
import os

from . import _pycore

core = _pycore
NAME = "python"

if os.environ.get("GEOKERNEL_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _core as core  # noqa: F811
        NAME = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        core = _pycore
        NAME = "python"


def backends() -> dict:
    """All importable cores by name, for tests and benchmarks."""
    out = {"python": _pycore}
    try:
        from . import _core
        out["compiled"] = _core
    except ImportError:  # pragma: no cover
        pass
    return out
