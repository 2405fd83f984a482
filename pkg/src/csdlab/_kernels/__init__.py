"""Hot numeric kernels with a compiled fast path.

The Cython extension is preferred when importable; otherwise the numpy
fallback in ``_python`` is used. Set ``CSDLAB_KERNELS=python`` or
``CSDLAB_KERNELS=compiled`` to force a backend (the latter raises if the
extension is missing). Both backends implement the same functions with the
same semantics; results may differ in the last few ulps.
"""

import os

_requested = os.environ.get("CSDLAB_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "compiled", "python"):
    raise ImportError(
        f"CSDLAB_KERNELS must be 'compiled' or 'python', got {_requested!r}"
    )

if _requested == "python":
    from . import _python as _impl
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _python as _impl

BACKEND = "compiled" if _impl.__name__.endswith("_speedups") else "python"
jacobi_sweeps = _impl.jacobi_sweeps
head_loss_grads = _impl.head_loss_grads

__all__ = ["BACKEND", "jacobi_sweeps", "head_loss_grads"]
