"""Hot numeric kernels, each with a numba and a pure-numpy implementation."""
