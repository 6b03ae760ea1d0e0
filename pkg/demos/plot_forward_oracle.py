"""
Boundary traces of a small inclusion
====================================

The boundary flux perturbed by a small inclusion of scale ``alpha`` is, to
leading order, a sum of a dipole and a monopole source.  For a disk at the
center of the unit disk the exact field is a Bessel series, which lets us watch
the leading-order model converge as the inclusion shrinks.
"""

import numpy as np

from smallinc.forward import ProbeBC, exact_concentric_disk, solve_trace_perturbation
from smallinc.greens import BoundaryQuadrature
from smallinc.model import DomainGeometry, Inclusion, Medium, Scene

k = 4.0
medium = Medium.from_wavenumber(k)
quad = BoundaryQuadrature.on_circle(256)
bc = ProbeBC.for_eta((1.0, 0.7), k)

# %%
# Relative error of the model against the exact solution.  It drops like rho^2.
print(" rho     |D|         error")
for rho in (0.2, 0.1, 0.05, 0.025, 0.0125):
    scene = Scene(medium, DomainGeometry.full(), (Inclusion((0.0, 0.0), rho, 2.0, 3.0),), 0.5)
    model = solve_trace_perturbation(scene, bc, quad)
    exact = exact_concentric_disk(rho, 2.0, 3.0, bc, medium, quad)
    err = np.linalg.norm(model.values - exact.values) / np.linalg.norm(exact.values)
    print(f"{rho:6.4f}  {exact.l2_norm():.3e}  {err:.4f}")

# %%
# Off-center inclusions have no series solution, but the quadrature converges
# spectrally: doubling the nodes changes nothing visible.
scene = Scene(medium, DomainGeometry.full(), (Inclusion((0.3, -0.2), 0.05, 2.0, 3.0),), 0.5)
coarse = solve_trace_perturbation(scene, bc, BoundaryQuadrature.on_circle(256)).values
fine = solve_trace_perturbation(scene, bc, BoundaryQuadrature.on_circle(512)).values
print("\nnode doubling change:", np.abs(fine[::2] - coarse).max() / np.abs(coarse).max())
