"""Counter-based normal variates (Philox4x64-10 + inverse normal CDF).

Every variate is a pure function of ``(seed, path, step)``, so results do
not depend on how paths are scheduled across threads. The block function
matches :class:`numpy.random.Philox` bit for bit.
"""

import math

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ZERO = np.uint64(0)


@njit(cache=True, inline="always")
def _mulhilo(a, b):
    a0 = a & _MASK32
    a1 = a >> _S32
    b0 = b & _MASK32
    b1 = b >> _S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _S32) + (p01 & _MASK32) + (p10 & _MASK32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, a * b


@njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    """Ten Philox4x64 rounds; returns the four output words."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def _uniform(x):
    # midpoint of one of 2^53 cells: never 0 or 1
    return (np.int64(x >> _S11) + 0.5) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def ppnd16(p):
    """Inverse standard normal CDF (Wichura's AS241, about 1e-16 relative)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                         + 67265.770927008700853) * r + 45921.953931549871457) * r
                       + 13731.693765509461125) * r + 1971.5909503065514427) * r
                     + 133.14166789178437745) * r + 3.387132872796366608) / \
            (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                  + 39307.89580009271061) * r + 21213.794301586595867) * r
                + 5394.1960214247511077) * r + 687.1870074920579083) * r
              + 42.313330701600911252) * r + 1.0)
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
                    + 0.24178072517745061177) * r + 1.27045825245236838258) * r
                  + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734) / \
            (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                  + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
                + 0.68976733498510000455) * r + 1.6763848301838038494) * r
              + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 0.0012426609473880784386) * r + 0.026532189526576123093) * r
                  + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772) / \
            (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                  + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
              + 0.59983220655588793769) * r + 1.0)
    return -val if q < 0 else val


@njit(cache=True)
def normal_block(seed, path, block):
    """Four standard normals for counter ``(block, path)`` under key ``seed``."""
    w0, w1, w2, w3 = philox_block(np.uint64(block), np.uint64(path), _ZERO, _ZERO,
                                  np.uint64(seed), _ZERO)
    return (ppnd16(_uniform(w0)), ppnd16(_uniform(w1)),
            ppnd16(_uniform(w2)), ppnd16(_uniform(w3)))


@njit(cache=True)
def normal_at(seed, path, step):
    """The normal variate for ``(path, step)``."""
    z = normal_block(seed, path, step // 4)
    return z[step % 4]


@njit(cache=True)
def fill_normals(seed, path, start, out):
    """Write the variates for steps ``start, start + 1, ...`` of ``path`` into ``out``."""
    n = out.shape[0]
    i = 0
    step = start
    while i < n:
        z = normal_block(seed, path, step // 4)
        j = step % 4
        while j < 4 and i < n:
            out[i] = z[j]
            i += 1
            j += 1
            step += 1


def normals(seed, path, start, count):
    out = np.empty(count)
    fill_normals(seed, path, start, out)
    return out
