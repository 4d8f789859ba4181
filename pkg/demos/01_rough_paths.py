"""Rough paths on a grid: lifting, Chen's relation and how rough a driver looks.

Run from the repository root: ``python demos/01_rough_paths.py``.
"""

import numpy as np

from roughsde import (TimeGrid, canonical_lift, chen_compose, chen_product, generate_brownian,
                      generate_fbm, generate_smooth, geometricity_defect, ito_lift, scan_roughness)

grid = TimeGrid(1.0, 2 ** 12)

# A fractional Brownian sample in two dimensions, lifted with its step areas.
z = generate_fbm(grid, 2, hurst=0.45, seed=11)
Z = canonical_lift(z, alpha=0.45)
print("fBM lift:", Z.increments.shape, "increments,", Z.step_area.shape, "step areas")

# Chen: the area over [s, u] splits exactly into [s, t] and [t, u] plus a cross term.
s, t, u = 100, 2000, 4000
inc, area = chen_product(chen_compose(Z, s, t), chen_compose(Z, t, u))
inc_direct, area_direct = chen_compose(Z, s, u)
print(f"Chen residual on [{s}, {u}]: {np.abs(area - area_direct).max():.1e}")

# The symmetric part of a canonical lift is half the squared increment.
print(f"geometricity defect, canonical lift: {geometricity_defect(Z):.1e}")
Zito = ito_lift(generate_brownian(TimeGrid(1.0, 256), 2, 3))
print(f"geometricity defect, Ito-area lift:  {geometricity_defect(Zito):.3f}  (not geometric)")

# Roughness: the modulus of a smooth path dies at small scales, a Brownian one does not.
eps = [2.0 ** -k for k in range(2, 8)]
for label, path in [("linear", generate_smooth(grid, 1, "linear")),
                    ("brownian", generate_brownian(grid, 1, 5))]:
    rep = scan_roughness(canonical_lift(path), theta=0.6, eps_list=eps)
    table = " ".join(f"{l:.2f}" for _, l in rep.table)
    print(f"{label:9s} L(eps) = [{table}]  exponent {rep.decay_exponent:+.2f}  -> {rep.verdict}")
