import sys, time, warnings
sys.path.insert(0, "src")
import numpy as np
from provhunt.bench import ScenarioSpec, generate, bench_hunt, make_labeler
from provhunt.ingest import dedup
from provhunt.ppg import build_ppg
from provhunt.matchnet import ReprModel
from provhunt.training import TrainConfig, train, sample_benign_corpus
from provhunt.hunting import hunt_exhaustive

t0 = time.time()
spec = ScenarioSpec(seed=0)
br = generate(spec)
labels = br.labels()
kept, _ = dedup(br.events)
g, _ = build_ppg(kept, versioning=True)
snap = g.snapshot()

# benign-only range for the training corpus
spec_b = ScenarioSpec(campaigns=(), seed=7)
br_b = generate(spec_b)
kept_b, _ = dedup(br_b.events)
gb, _ = build_ppg(kept_b, versioning=True)
snap_b = gb.snapshot()

with warnings.catch_warnings(record=True) as w:
    warnings.simplefilter("always")
    corpus = sample_benign_corpus(snap_b, size=300, seed=5)
    floor_warn = sum("distance floor" in str(x.message) for x in w)
sizes = [c.n_nodes for c in corpus]
print(f"corpus n={len(corpus)} sizes min/med/max="
      f"{min(sizes)}/{sorted(sizes)[len(sizes)//2]}/{max(sizes)} "
      f"floor warnings={floor_warn}  [{time.time()-t0:.1f}s]")

model = ReprModel(d=64, layers=3, seed=1)
cfg = TrainConfig(epochs=30, corpus_size=len(corpus), seed=3)
res = train(model, corpus, cfg)
print(f"train: loss {res.losses[0]:.4f} -> {res.losses[-1]:.4f} "
      f"pos={res.pos_mean:.3f} neg={res.neg_mean:.3f}  [{time.time()-t0:.1f}s]")

rep = bench_hunt(br.events, labels, br.queries, model, theta=0.3, k=2,
                 decoy_pois=60)
n_graphs = len(rep["hist"]["scores"])
att = [s for s, l in zip(rep["hist"]["scores"], rep["hist"]["labels"]) if l]
ben = [s for s, l in zip(rep["hist"]["scores"], rep["hist"]["labels"]) if not l]
print(f"hunt(decoys=60): graphs={n_graphs} recall={rep['metrics']['recall']} "
      f"fpr={rep['metrics']['fpr']} auc={rep['metrics']['auc']}")
print(f"  attack scores: {sorted(round(s,3) for s in att)}")
if ben:
    p95 = float(np.percentile(ben, 95))
    print(f"  benign: n={len(ben)} max={max(ben):.3f} p95={p95:.3f}")

# exhaustive separation
lab = make_labeler(snap, set(labels["attack_ids"]))
rep_x = hunt_exhaustive(snap, br.queries, model, theta=0.3, k=2, labeler=lab)
sc = [v.score for v in rep_x.verdicts]
lb = [v.label for v in rep_x.verdicts]
att_x = [s for s, l in zip(sc, lb) if l]
ben_x = [s for s, l in zip(sc, lb) if not l]
p95x = float(np.percentile(ben_x, 95)) if ben_x else float("nan")
print(f"exhaustive: graphs={len(sc)} attack n={len(att_x)} min={min(att_x):.3f} "
      f"| benign n={len(ben_x)} p95={p95x:.3f} max={max(ben_x):.3f} "
      f"sep={'OK' if att_x and min(att_x) > p95x else 'FAIL'}  "
      f"[{time.time()-t0:.1f}s]")
