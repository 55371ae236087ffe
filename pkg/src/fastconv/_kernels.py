"""Hot loops of the conservative remap, JIT-compiled when numba is present.

Each kernel re-bins one batch of row densities through a monotone-cubic
interpolant of the row's cumulative mass, evaluated at pre-image edge
positions.  Rows are independent, so the parallel schedule cannot change
the results.  ``HAVE_NUMBA`` gates the dispatch; the numpy fallback lives
in :mod:`fastconv.engine`.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _hermite(c, d, k, t):
        omt = 1.0 - t
        h00 = (1.0 + 2.0 * t) * omt * omt
        h10 = t * omt * omt
        h01 = t * t * (3.0 - 2.0 * t)
        h11 = t * t * (t - 1.0)
        return c[k] * h00 + d[k] * h10 + c[k + 1] * h01 + d[k + 1] * h11

    @njit(cache=True, inline="always")
    def _row_cdf_slopes(row, c, d):
        n = row.shape[0]
        c[0] = 0.0
        for j in range(n):
            c[j + 1] = c[j] + row[j]
        d[0] = row[0]
        d[n] = row[n - 1]
        for j in range(1, n):
            a = row[j - 1]
            b = row[j]
            p = a * b
            d[j] = 2.0 * p / (a + b) if p > 0.0 else 0.0

    @njit(cache=True, parallel=True)
    def remap_rows_shared(values, cell, frac, out):
        """Remap every row at one shared set of edge positions."""
        rows, n = values.shape
        for r in prange(rows):
            c = np.empty(n + 1)
            d = np.empty(n + 1)
            _row_cdf_slopes(values[r], c, d)
            prev = _hermite(c, d, cell[0], frac[0])
            for j in range(n):
                cur = _hermite(c, d, cell[j + 1], frac[j + 1])
                v = cur - prev
                out[r, j] = v if v > 0.0 else 0.0
                prev = cur

    @njit(cache=True, parallel=True)
    def remap_rows_affine(values, base, offset, out):
        """Remap row r at edge positions base[i] + offset[r], clamped."""
        rows, n = values.shape
        top = float(n)
        for r in prange(rows):
            c = np.empty(n + 1)
            d = np.empty(n + 1)
            _row_cdf_slopes(values[r], c, d)
            off = offset[r]
            p = base[0] + off
            if p < 0.0:
                p = 0.0
            elif p > top:
                p = top
            k = int(p)
            if k > n - 1:
                k = n - 1
            prev = _hermite(c, d, k, p - k)
            for j in range(n):
                p = base[j + 1] + off
                if p < 0.0:
                    p = 0.0
                elif p > top:
                    p = top
                k = int(p)
                if k > n - 1:
                    k = n - 1
                cur = _hermite(c, d, k, p - k)
                v = cur - prev
                out[r, j] = v if v > 0.0 else 0.0
                prev = cur
