"""Synthesize a dataset, train the full model, evaluate it and draw a timeline.

    python3 demos/01_synthetic_end_to_end.py [workdir]

Takes a little over a minute on one core.
"""

# %%
import os
import sys
import tempfile

import numpy as np

from ssagan import SynthSpec, TrainConfig, infer_labels, synth_generate, train_epochs
from ssagan.metrics import evaluate, report_table
from ssagan.plot import write_timeline
from ssagan.training import detections_from_predictions

work = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="ssagan-demo-")
os.makedirs(work, exist_ok=True)

# %% 5 actions plus background, 16-dim frames, 20 train / 5 test videos
data = synth_generate(SynthSpec(seed=7), 25, 300, out_dir=os.path.join(work, "data"))
k = data.manifest.k
train_labels = np.concatenate([v.labels for v in data.split("train")])
print("k =", k, " train frames =", train_labels.size)
print("class frequencies:", np.round(np.bincount(train_labels, minlength=k) / train_labels.size, 3))

# %% 20 epochs at lr, 60 at lr/10; queue of 16 past states
config = TrainConfig(variant="ssa-gan", lambda_c=100.0, m=16, epochs=(20, 60), seed=0)
model, losses = train_epochs(data, config, out_dir=os.path.join(work, "run"),
                             progress=lambda e, d, g, lr: e % 10 == 0 and print(f"epoch {e}  d {d:.3f}  g {g:.3f}"))

# %% per-video metrics on the test split
rows = {}
for seq in data.split("test"):
    labels, probs = infer_labels(seq, model)
    rows[seq.video_id] = evaluate(labels, seq.labels, detections_from_predictions(labels, probs))
print(report_table(rows))

# %% timeline of the first test video
seq = data.split("test")[0]
pred, _ = infer_labels(seq, model)
path = os.path.join(work, f"{seq.video_id}.svg")
write_timeline(path, seq.labels, pred, k, data.manifest.class_names, title=seq.video_id)
print("timeline:", path)
