import sys
sys.path.insert(0, "src")
from provhunt.bench import ScenarioSpec, generate, bench_sampling, bench_memory
from provhunt.ingest import dedup
from provhunt.ppg import build_ppg
from provhunt.graphs import poi_entities

for seed in (0, 1, 2, 3):
    spec = ScenarioSpec(seed=seed)
    br = generate(spec)
    labels = br.labels()
    kept, _ = dedup(br.events)
    g, _ = build_ppg(kept, versioning=True)
    snap = g.snapshot()
    # exp status of attack POI entities
    exps = {}
    for name, doc in labels["campaigns"].items():
        for pid in doc["pois"]:
            e = snap.entity_of_id(pid)
            exps[pid] = snap.ent_exp(e)
    tbl = bench_sampling(br.events, labels, br.queries, ks=(1, 2, 3))
    print(f"seed {seed}  n={len(br.events)}  poi exp: {exps}")
    ok = True
    for name, row in tbl.items():
        crs = [row[k]["node_cr"] for k in (1, 2, 3)]
        mono = all(crs[i] <= crs[i + 1] + 1e-12 for i in range(2))
        c2 = row[2]
        flag = c2["node_cr"] >= 0.70 and c2["node_nr"] <= 0.30 and mono
        ok = ok and flag
        print(f"  {name:18s} cr@k: {[round(c,3) for c in crs]} "
              f"nr@2={c2['node_nr']:.3f} nodes@2={c2['nodes']} "
              f"{'OK' if flag else 'FAIL'}")
    print(f"  => {'PASS' if ok else 'FAIL'}")
