"""Select the compiled kernels when available, else the numpy fallback.

Set ``COLLAPSE_LAB_PURE=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("COLLAPSE_LAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

project_lp_ball = _impl.project_lp_ball
rk4_three_neuron = _impl.rk4_three_neuron
relu_risk_grad = _impl.relu_risk_grad
