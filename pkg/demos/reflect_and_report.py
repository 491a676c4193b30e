"""
Full denoise pass with a reduction report
=========================================
"""

# %%
import io
import json

from kgdenoise import JudgeConfig, NoiseSpec, PipelineConfig, generate_noisy_kg, reflection_metrics, run_pipeline

graph, truth = generate_noisy_kg(NoiseSpec(seed=3, erroneous_triple_fraction=0.2))

config = PipelineConfig(
    embedding_source="mock",
    summarizer="none",
    delta_er=0.99,
    target_ratio=None,
    reflection=JudgeConfig(backend="mock", threshold=0.2),
)

# %%
log = io.BytesIO()
result = run_pipeline(graph, config, log_stream=log)
print(json.dumps(result.report.to_dict(), indent=2))

# %%
# The judge log has one JSON line per distinct triple.
lines = log.getvalue().decode().splitlines()
print(len(lines), "verdicts; first two:")
for line in lines[:2]:
    print(" ", line)

# %%
# Reflection alone, straight on the raw graph, so triple keys line up with the truth.
raw = run_pipeline(graph, config.with_overrides(target_ratio=0.0))
m = reflection_metrics({t.key for t in raw.removed}, truth, {t.key for t in graph.triples})
print(f"reflection precision {m.precision:.2f}, recall {m.recall:.2f}")
