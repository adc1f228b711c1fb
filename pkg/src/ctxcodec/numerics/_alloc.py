"""Keep freed buffers in the malloc heap instead of returning them to the kernel.

Training builds and drops megabytes of activations every step.  With glibc's
defaults each large buffer is a fresh mmap whose pages fault in on first
touch, which dominates runtime on small VMs.  Raising the mmap/trim
thresholds lets the allocator recycle that memory.  No-op off glibc.
"""

import ctypes
import ctypes.util
import sys

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3


def tune_allocator() -> bool:
    if not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    ok = mallopt(_M_MMAP_THRESHOLD, 32 << 20)
    ok &= mallopt(_M_TRIM_THRESHOLD, 1 << 30)
    ok &= mallopt(_M_TOP_PAD, 256 << 20)
    return bool(ok)
