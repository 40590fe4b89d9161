"""Selection between the compiled and the pure-numpy trajectory kernels.

The compiled extension (undephase._kernels) is optional; the numpy module
(undephase._purepy) implements the same entry points with the same
floating-point operation order, so results do not depend on which backend ran.
"""

from __future__ import annotations

import importlib

_CACHE: dict[str, object] = {}


def available_backends() -> list[str]:
    """Names accepted by get_backend, compiled first when it imports."""
    names = []
    for name in ("compiled", "python"):
        try:
            get_backend(name)
        except ImportError:
            continue
        names.append(name)
    return names


def get_backend(name: str = "auto"):
    """Return the kernel module for `name` in {auto, compiled, python}.

    "auto" prefers the compiled extension and falls back to numpy when the
    extension was not built. Raises ImportError only for an explicit
    "compiled" request without the built extension.
    """
    if name == "auto":
        try:
            return get_backend("compiled")
        except ImportError:
            return get_backend("python")
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name not in _CACHE:
        module = "undephase._kernels" if name == "compiled" else "undephase._purepy"
        _CACHE[name] = importlib.import_module(module)
    return _CACHE[name]
