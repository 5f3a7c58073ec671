"""Seeded standard-normal sampling.

Uniforms come from numpy's PCG64 bit generator (``Generator.random``), and
normals are produced by the Box-Muller transform::

    z0 = sqrt(-2 log(1 - u1)) * cos(2 pi u2)
    z1 = sqrt(-2 log(1 - u1)) * sin(2 pi u2)

consuming uniforms in consecutive pairs.  The same ``(seed, n)`` always yields
the same bits; other implementations using PCG64 + Box-Muller match in
distribution.
"""

import numpy as np


def gaussian(seed, n):
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    pairs = (n + 1) // 2
    u = np.random.Generator(np.random.PCG64(int(seed))).random(2 * pairs)
    u1, u2 = u[0::2], u[1::2]
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    angle = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:n]
