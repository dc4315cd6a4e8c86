# # Timing the online loop
#
# One warm-up frame is run and discarded, then 100 consecutive frames are
# timed one at a time. Stage times are split into encoding, inference and
# postprocessing (NMS); end-to-end covers all three.

# %%
from scanstack.backends import BusyWaitBackend, GeometricBackend, NullBackend
from scanstack.pipeline import bench_latency
from scanstack.sim import build_segment_world, simulate_episode
from scanstack.world import GenerationConfig, generate_scenario

scenario = generate_scenario(0, GenerationConfig(n_waypoints=30))
world = build_segment_world(scenario)
scans = []
for wp in range(30):
    scans += simulate_episode(scenario, wp, 5, world=world).frames
scans = scans[:101]

# %% [markdown]
# A backend that spins for exactly 1 ms checks the harness itself.

# %%
rep = bench_latency(scans, BusyWaitBackend(1.0))
print(rep.to_table())
print(f"mean infer {rep.mean_infer_ms:.3f} ms over {rep.frames} frames\n")

# %% [markdown]
# Encoding and NMS alone, then the geometric baseline.

# %%
for backend in (NullBackend(), GeometricBackend()):
    rep = bench_latency(scans, backend)
    print(rep.to_table())
    print()
