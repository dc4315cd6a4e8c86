# # Evaluating detectors
#
# The oracle backend returns the ground-truth boxes of each stack's middle
# frame, which checks the labeler, the online pipeline and the metrics
# together: it must score exactly 1. The geometric baseline clusters hits in
# the newest channel and fits rectangles, with no learning involved.

# %%
import sys
import tempfile
from pathlib import Path

from scanstack.dataset import DatasetConfig, evaluate_split, generate_dataset, write_eval_outputs

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="scanstack-"))
generate_dataset(out, DatasetConfig(scenarios=4, positions=10, frames_per_episode=5))

# %%
oracle = evaluate_split(out, "oracle", "test")
print(f"oracle on scenarios {oracle.scenario_ids}, {oracle.frames} stacks")
print(oracle.report.to_table())

# %%
geo = evaluate_split(out, "geometric", "train")
print(f"\ngeometric on scenarios {geo.scenario_ids}, {geo.frames} stacks")
print(geo.report.to_table())

# %% [markdown]
# Confusion matrix, rows = predicted, columns = true, background last;
# each column is normalized to sum to 1.

# %%
names = ["chair", "box", "desk", "door", "bg"]
cm = geo.report.confusion_normalized()
print("\n" + " " * 7 + "".join(f"{n:>7}" for n in names))
for name, row in zip(names, cm):
    print(f"{name:>7}" + "".join(f"{v:7.2f}" for v in row))

# %%
for p in write_eval_outputs(geo, out / "eval" / "geometric-train"):
    print("wrote", p)
