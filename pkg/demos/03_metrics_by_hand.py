"""The segmental metrics on small hand-made label sequences.

    python3 demos/03_metrics_by_hand.py
"""

# %%
import numpy as np

from ssagan.metrics import Detection, edit_score, extract_segments, f1_at_k, frame_accuracy, map_mid

gt = np.array([0, 0, 1, 1, 1, 1, 0, 2, 2, 2, 2, 2, 0, 3, 3, 3])
pred = np.array([0, 1, 1, 1, 1, 0, 0, 2, 2, 3, 2, 2, 0, 3, 3, 0])
print("gt segments:  ", extract_segments(gt))
print("pred segments:", extract_segments(pred))

# %% over-segmentation (the lone 3 inside the run of 2s) barely moves frame accuracy
print(f"accuracy {frame_accuracy(pred, gt):.1f}")
print(f"edit     {edit_score(pred, gt):.1f}")
for tau in (0.1, 0.25, 0.5):
    print(f"F1@{int(tau * 100):<3d}   {f1_at_k(pred, gt, tau):.1f}")

# %% mAP@mid: a detection is a hit when its midpoint lands in an unclaimed gt segment
dets = [Detection(1, 1, 4, 0.9), Detection(2, 7, 8, 0.8), Detection(3, 9, 9, 0.3),
        Detection(2, 10, 11, 0.7), Detection(3, 13, 14, 0.6)]
print(f"mAP@mid  {map_mid(dets, gt):.1f}")
