"""Hot numeric kernels, bound to the backend chosen at import time.

See :mod:`featmimic.backend` for how the choice is made.  Both
implementations share signatures and semantics; the numpy path exists so
the package runs without a working numba install.
"""

from featmimic import backend

if backend.USE_NUMBA:
    from featmimic.kernels import numba_impl as _impl
else:
    from featmimic.kernels import numpy_impl as _impl

dense_forward = _impl.dense_forward
dense_input_grad = _impl.dense_input_grad
conv2d_forward = _impl.conv2d_forward
conv2d_input_grad = _impl.conv2d_input_grad
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_input_grad = _impl.maxpool2d_input_grad
warp_bilinear = _impl.warp_bilinear
sepfilter2d_valid = _impl.sepfilter2d_valid

__all__ = [
    "conv2d_forward",
    "conv2d_input_grad",
    "dense_forward",
    "dense_input_grad",
    "maxpool2d_forward",
    "maxpool2d_input_grad",
    "sepfilter2d_valid",
    "warp_bilinear",
]
