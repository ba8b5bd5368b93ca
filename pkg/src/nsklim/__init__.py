"""nsklim: pseudo-spectral rotating compressible NSK solver and its limit checks.

Layout
------
slab        spectral function spaces on the periodic slab (transforms,
            differential operators, Sobolev norms, dealiasing)
plane       horizontal-only (vertical-mean) spectral fields
model       the scaled NSK right-hand side and its per-mode stiff symbol
integrate   integrating-factor Runge-Kutta stepping and checkpoints
limits      QG sigma-equation, 2D Euler, corrector and residuals
acoustics   the acoustic-rotation operator: spectrum, projections, RAGE
diagnostics energy telemetry, error norms, compact L2, rate regression
initial     deterministic initial-data generators
harness     experiment orchestration, sweep records, output emission
cli         the `nsklim` command-line tool
"""

from nsklim.model import Alpha, NskParams, NskState
from nsklim.slab import (
    Parity,
    ScalarField,
    SlabGrid,
    VectorField,
    dealias,
    sobolev_norm,
)

__all__ = [
    "Alpha",
    "NskParams",
    "NskState",
    "Parity",
    "ScalarField",
    "SlabGrid",
    "VectorField",
    "dealias",
    "sobolev_norm",
]
