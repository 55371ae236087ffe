"""CSV writers for densities, joint densities, prices, surfaces, and MC outputs.

Everything is plain text with 17-significant-digit decimals so reruns diff
byte-for-byte and other toolchains can consume the numbers losslessly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .engine import DensityVector
from .joint import JointDensity
from .mc import McEstimate, McHistogram
from .pricing import VolSurface


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write(path, header: str, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_density_csv(path, density: DensityVector, nodes: np.ndarray, label: str = "z") -> None:
    """Rows `z,density,tau` (or `u,...` for u-marginals), one per grid node."""
    tau = _fmt(density.tau)
    _write(
        path,
        f"{label},density,tau",
        ((_fmt(x), _fmt(v), tau) for x, v in zip(nodes, density.values)),
    )


def write_joint_csv(path, J: JointDensity, u_nodes: np.ndarray, z_nodes: np.ndarray) -> None:
    """Rows `u,z,density`, u-major, one per joint-grid cell."""

    def rows():
        for i, u in enumerate(u_nodes):
            fu = _fmt(u)
            for j, z in enumerate(z_nodes):
                yield (fu, _fmt(z), _fmt(J.values[i, j]))

    _write(path, "u,z,density", rows())


def write_histogram_csv(path, hist: McHistogram) -> None:
    _write(
        path,
        "bin_lo,bin_hi,density,ci_lo,ci_hi",
        (
            (_fmt(hist.bin_edges[i]), _fmt(hist.bin_edges[i + 1]), _fmt(hist.density[i]),
             _fmt(hist.ci_low[i]), _fmt(hist.ci_high[i]))
            for i in range(len(hist.counts))
        ),
    )


def write_estimates_csv(path, rows: list[tuple[str, McEstimate]]) -> None:
    _write(
        path,
        "label,mean,stderr,ci_lo,ci_hi",
        (
            (label, _fmt(e.mean), _fmt(e.std_error), _fmt(e.ci95_low), _fmt(e.ci95_high))
            for label, e in rows
        ),
    )


def write_price_csv(path, rows) -> None:
    """Rows `style,strike,maturity,price,mass_deficit`."""
    _write(
        path,
        "style,strike,maturity,price,mass_deficit",
        (
            (style, _fmt(strike), _fmt(maturity), _fmt(price), _fmt(deficit))
            for style, strike, maturity, price, deficit in rows
        ),
    )


def write_surface_csv(path, surface: VolSurface) -> None:
    """Rows `strike,maturity,implied_vol,price,ci_low,ci_high,flag`."""

    def rows():
        for i, ttm in enumerate(surface.maturities):
            for j, k in enumerate(surface.strikes):
                lo = surface.ci_low[i, j] if surface.ci_low is not None else float("nan")
                hi = surface.ci_high[i, j] if surface.ci_high is not None else float("nan")
                yield (
                    _fmt(k), _fmt(ttm), _fmt(surface.vols[i, j]), _fmt(surface.prices[i, j]),
                    _fmt(lo), _fmt(hi), surface.flags[i][j],
                )

    _write(path, "strike,maturity,implied_vol,price,ci_low,ci_high,flag", rows())
