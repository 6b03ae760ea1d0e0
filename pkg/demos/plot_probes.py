"""
Probes from half the boundary
=============================

Only the right half of the circle carries data.  A probe is a Helmholtz
solution that vanishes on the left half and mimics a plane wave on a small
control disk.  Building it is a badly conditioned least-squares problem, so
the achieved misfit is reported rather than assumed.
"""

import numpy as np

from smallinc.model import DomainGeometry
from smallinc.probes import build_probe_operator, oriented_probe, probe_quality_scan

k = 4.0
op = build_probe_operator(DomainGeometry.half(), 0.4, k)
print(f"singular values span {np.log10(op.s[0] / op.s[-1]):.1f} decades")

# %%
# Misfit against |eta| for two regularization levels.  Along the eta_y axis the
# evanescent targets can be made to grow toward the aperture, which is where
# they are cheap to synthesise.  Along eta_x they cannot.
etas = [(0.0, t) for t in np.linspace(0.0, 9.0, 10)]
for rel_lam in (1e-8, 1e-12):
    rows = probe_quality_scan(op, etas, rel_lam * op.sigma_max)
    print(f"\nlambda = {rel_lam:g} sigma_max")
    for norm, res in rows:
        print(f"  |eta| = {norm:4.1f}   residual {res:.2e}")

# %%
# The price of a good probe: a large boundary density that amplifies noise.
for eta in [(0.0, 0.0), (5.0, 3.0)]:
    probe = oriented_probe(op, eta, 1e-12 * op.sigma_max)
    print(f"\neta = {eta}: residual {probe.relative_residual:.1e}, max |density| {np.abs(probe.trace.values).max():.1e}")
