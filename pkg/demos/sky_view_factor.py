"""
Sky view factor on toy terrain
==============================

Walk through the SVF engine on scenes whose answer is known in advance.
"""

import math

import numpy as np

from terrainqa import synthetic as S
from terrainqa.raster import Raster
from terrainqa.svf import SvfParams, horizon_angle, svf_at, svf_raster, viewshed_range

# A flat plain sees the whole sky.
print("flat plain:", svf_at(S.flat_dsm(64), (32, 32)))

# Terrain rising at a constant slope to the east hides a wedge of sky.  The
# visible fraction has a closed form, so this is a good sanity check.
for deg in (15, 30, 45, 60):
    beta = math.radians(deg)
    got = svf_at(S.half_cone_dsm(beta), (128, 128))
    print(f"slope {deg:2d} deg: svf {got:.4f}  closed form {(1 + math.cos(beta) ** 2) / 2:.4f}")

# The horizon along one azimuth: a wall 10 m high and 10 m away sits at 45 deg.
wall = np.zeros((41, 41))
wall[:, 30:] = 10.0
print("horizon east of wall:", round(math.degrees(horizon_angle(Raster(wall), (20, 20), math.pi / 2)), 2))

# A street canyon: SVF is lowest against the facades and peaks mid-street.
dsm = S.canyon_dsm(96)
canyon = svf_raster(dsm, SvfParams(n_azimuths=32))
street = dsm.values[48] == dsm.values[48].min()
print("across the street:", np.round(canyon.values[48][street], 2))

# Fewer azimuths are cheaper and converge quickly.
for n in (8, 16, 32, 64, 128):
    print(f"{n:4d} azimuths -> {svf_at(S.canyon_dsm(96), (48, 48), SvfParams(n_azimuths=n)):.4f}")

# Viewshed range: inside a tall ring wall the view stops at the wall.
print("viewshed open plain:", viewshed_range(S.flat_dsm(64), (32, 32)))
print("viewshed inside ring:", round(viewshed_range(S.ring_wall_dsm(radius=5), (64, 64)), 3))
