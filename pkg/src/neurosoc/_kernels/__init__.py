"""Kernel backend selection: compiled extension if built, numpy fallback
otherwise.

Set ``NEUROSOC_BACKEND=pure`` or ``=compiled`` to force a backend (the
latter raises if the extension is missing).  Both backends are bit-exact
twins; ``tests/test_kernels.py`` enforces the equivalence.
"""

import os

_forced = os.environ.get("NEUROSOC_BACKEND")

if _forced == "pure":
    from . import pure as _impl

    BACKEND = "pure"
elif _forced == "compiled":
    from . import _core as _impl  # ImportError here means the ext is not built

    BACKEND = "compiled"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import pure as _impl

        BACKEND = "pure"

lif_run = _impl.lif_run
stdp_lif_run = _impl.stdp_lif_run


def available_backends():
    """Names of importable backends (for tests and the benchmark)."""
    names = ["pure"]
    try:
        from . import _core  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the kernel module for an explicit backend name."""
    if name == "pure":
        from . import pure

        return pure
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
