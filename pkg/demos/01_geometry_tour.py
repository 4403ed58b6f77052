# %% [markdown]
# # Rigid transforms, three ways
#
# A calibration is a 4x4 rigid transform. The network never sees the matrix;
# it regresses a small vector. This walk-through converts one transform
# between the three encodings and shows the refinement law.

# %%
import numpy as np

from regnet_calib import se3
from regnet_calib.decalib import make_initial, sample_decalib
from regnet_calib.encoding import DecalibRange, decode_decalib, encode_decalib
from regnet_calib.scene import Rig

np.set_printoptions(precision=4, suppress=True)

H = se3.euler_to_transform(se3.EulerPose(np.radians(3.0), np.radians(-1.5), np.radians(2.0), (0.1, -0.05, 0.2)))
print(H.matrix)

# %% yaw, pitch, roll come back exactly
e = se3.transform_to_euler(H)
print(np.degrees(e.angles), e.translation)

# %%
q = se3.transform_to_quat(H)
d = se3.dualquat_from_transform(H)
print("quaternion (w, x, y, z):", q.quaternion)
print("dual quaternion real:", d.real, "dual:", d.dual)
for back in (se3.quat_to_transform(q), se3.transform_from_dualquat(d)):
    print("roundtrip error", np.abs(back.matrix - H.matrix).max())

# %% [markdown]
# ## What the network regresses
#
# A decalibration φ is drawn uniformly inside a range, here ±5° and ±0.3 m.
# Each representation has its own width; rotation parts carry a balance
# factor of 100 so they weigh about as much as translation in the loss.

# %%
r = DecalibRange(0.3, 5.0)
phi = sample_decalib(42, r)
for rep in ("euler", "quaternion", "dual_quaternion"):
    v = encode_decalib(phi, rep, r)
    err = np.abs(decode_decalib(v, r).matrix - phi.matrix).max()
    print(f"{rep:16s} {v.values}  decode error {err:.1e}")

# %% [markdown]
# ## Refinement
#
# The initial guess is the truth times φ. Undoing φ on the right gives the
# truth back, which is exactly what a perfect expert would do.

# %%
h_gt = Rig().h_gt
h_init = make_initial(h_gt, phi)
print(np.abs((h_init @ se3.invert(phi)).matrix - h_gt.matrix).max())
