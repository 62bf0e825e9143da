# %% [markdown]
# # The whole pipeline with caching
#
# `run_pipeline` goes cohort -> diagrams -> matrices -> P-plots -> models,
# and a second run with the same settings reuses every artifact.

# %%
import json
import tempfile
from pathlib import Path

from roitopo.pipeline import PipelineConfig, run_pipeline

out = Path(tempfile.mkdtemp()) / "run"
config = PipelineConfig(out_dir=str(out), classes="A:8:1:0.3,B:14:1:0.3", subjects_per_class=5,
                        timepoints=60, rois=6, dims=(0, 1), epochs=3)

# %%
first = run_pipeline(config)
print(first.artifact_count, "artifacts,", first.computed, "computed")

# %%
second = run_pipeline(config)
print(second.cache_hits, "cache hits,", second.computed, "computed")

# %%
manifest = json.loads((out / "run_manifest.json").read_text())
print(manifest["provenance"])
print(json.loads((out / "models" / "synthetic" / "H0" / "metrics.json").read_text())["test_accuracy"])
