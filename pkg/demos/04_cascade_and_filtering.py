# %% [markdown]
# # Coarse to fine, then over time
#
# Experts are chained: the coarse one removes most of the decalibration,
# the fine one cleans up what is left. Over a sequence with a fixed
# decalibration, a median over frames suppresses bad single-frame estimates.
#
# The demo uses trained experts from the acceptance cache when present
# (run `python3 tests/acceptance_support.py` to build them) and falls back
# to the ground-truth stub otherwise, which makes the numbers trivially zero.

# %%
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from acceptance_support import CACHE, COARSE, FINE, acceptance_config, cache_key  # noqa: E402
from regnet_calib import se3  # noqa: E402
from regnet_calib.decalib import make_initial, sample_decalib  # noqa: E402
from regnet_calib.experiments import cascade_trials, run_sequence, sequence_frames  # noqa: E402
from regnet_calib.expert import Expert  # noqa: E402

cfg = acceptance_config()
paths = [CACHE / f"expert_{cache_key(cfg, r)}.ckpt" for r in (COARSE, FINE)]
registry = [Expert.load(p) for p in paths] if all(p.exists() for p in paths) else ["oracle"]
print("experts:", [getattr(e, "ranges", e) for e in registry])

# %% ten paired trials through the cascade
frames = sequence_frames(cfg, 10)
for t in cascade_trials(registry, frames, 10, COARSE):
    steps = [t.before.mean_angle] + [s.mean_angle for s in t.stages]
    print(" -> ".join(f"{a:.2f}" for a in steps), "deg")

# %% a 20-frame sequence with two corrupted estimates
phi = sample_decalib(7, COARSE)
junk = se3.euler_to_transform(se3.EulerPose(*np.radians([15.0, -15.0, 15.0]), translation=(1.0, 1.0, 1.0)))
frames = sequence_frames(cfg, 20)
bad = {3: make_initial(frames[3].h_gt, junk), 11: make_initial(frames[11].h_gt, junk)}
for mode in ("median", "average"):
    run = run_sequence(registry, frames, phi, mode, estimates_override=bad)
    print(f"{mode:8s} filtered {run.filtered_error.mean_angle:.3f} deg, "
          f"per-frame median {run.median_frame_error:.3f} deg")
