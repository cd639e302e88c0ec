import sys, time
sys.path.insert(0, "src")
from provhunt.bench import ScenarioSpec, generate, bench_memory
from provhunt.ingest import dedup
from provhunt.ppg import build_ppg

for n in (100_000, 200_000):
    spec = ScenarioSpec(n_events=n, seed=0)
    t0 = time.time()
    br = generate(spec)
    t_gen = time.time() - t0
    t0 = time.time()
    rep = bench_memory(br.events)
    t_bench = time.time() - t0
    print(f"n={n}: gen={t_gen:.1f}s bench={t_bench:.1f}s "
          f"ratio={rep['ppg_bytes']/rep['naive_bytes']:.3f} "
          f"reduction={rep['reduction_pct']:.1f}% "
          f"ppg={rep['ppg_bytes']} naive={rep['naive_bytes']} "
          f"edges={rep['ppg_edges']}={rep['naive_edges']} "
          f"suppressed={rep['suppressed']}")

# criterion-4 shape: pure build timing 100k vs 200k on post-dedup streams
for n in (100_000, 200_000):
    br = generate(ScenarioSpec(n_events=n, seed=0))
    kept, _ = dedup(br.events)
    t0 = time.time()
    g, _ = build_ppg(kept, versioning=True)
    dt = time.time() - t0
    print(f"build n={n}: kept={len(kept)} t={dt:.2f}s")
