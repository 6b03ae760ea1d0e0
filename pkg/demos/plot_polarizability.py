"""
Polarization tensors of small shapes
====================================

A small inclusion looks, from far away, like a dipole whose strength is set by
its polarization tensor.  For a disk the tensor is a multiple of the identity
and known in closed form.  Other shapes need a boundary integral solve.
"""

import numpy as np
from importlib import resources

from smallinc.polarizability import Disk, Ellipse, load_fourier_shape, ptensor_disk, ptensor_nystrom

# %%
# Disk: numerical solve against the closed form, for weak and strong contrasts.
for muj in (0.1, 3.0, 100.0):
    num = ptensor_nystrom(Disk(), 1.0, muj, 256).entries
    ref = ptensor_disk(1.0, muj, np.pi).entries
    print(f"mu_j = {muj:6.1f}   M / pi = {num[0, 0] / np.pi:.12f}   closed form {ref[0, 0] / np.pi:.12f}")

# %%
# An ellipse has two distinct eigenvalues.  Rotating the shape rotates the tensor.
base = ptensor_nystrom(Ellipse(1.0, 0.5), 1.0, 3.0)
print("\nellipse 1 x 0.5, mu_j = 3")
print("eigenvalues / pi:", np.round(base.eigenvalues / np.pi, 8))
angle = np.pi / 5
c, s = np.cos(angle), np.sin(angle)
r = np.array([[c, -s], [s, c]])
rotated = ptensor_nystrom(Ellipse(1.0, 0.5, angle), 1.0, 3.0).entries
print("rotation mismatch:", np.linalg.norm(rotated - r @ base.entries @ r.T))

# %%
# A kite-like Fourier shape read from the bundled descriptor file.
with resources.as_file(resources.files("smallinc").joinpath("data/kite.txt")) as path:
    kite = load_fourier_shape(path)
t = ptensor_nystrom(kite, 1.0, 3.0, 256, check_convergence=True)
print("\nkite, mu_j = 3")
print(np.round(t.entries, 6))
print("symmetric:", t.is_symmetric)
