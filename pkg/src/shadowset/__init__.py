"""Paired shadow / shadow-free rendering and dataset synthesis tools.

The package renders four radiance buffers per scene (direct / indirect, each
with and without shadowing) with correlated sampling, composes them into
shadow / shadow-free image pairs plus a probabilistic shadow mask, prepares
indoor and object-composition scenes (camera sampling, light placement,
collision-free furniture rearrangement), and provides the depth/normal/
feature-driven attention weight kernels used to consume the data.
"""
import os as _os

# numba sizes its thread pool at import time from NUMBA_NUM_THREADS or the
# core count. Raise the cap so --threads up to 8 stays legal on small
# machines; oversubscription does not affect results (streams are
# counter-based and buffers are per-pixel).
if "NUMBA_NUM_THREADS" not in _os.environ:
    _os.environ["NUMBA_NUM_THREADS"] = str(max(8, _os.cpu_count() or 1))

__version__ = "0.1.0"
