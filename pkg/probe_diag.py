import sys, warnings
sys.path.insert(0, "src")
import numpy as np
from provhunt.bench import ScenarioSpec, generate, make_labeler
from provhunt.ingest import dedup
from provhunt.ppg import build_ppg
from provhunt.graphs import poi_entities
from provhunt.matchnet import ReprModel
from provhunt.training import TrainConfig, train, sample_benign_corpus, score_pairs
from provhunt.sampler import SamplingConfig, sample
from provhunt.hunting import hunt

spec = ScenarioSpec(seed=0)
br = generate(spec)
labels = br.labels()
kept, _ = dedup(br.events)
g, _ = build_ppg(kept, versioning=True)
snap = g.snapshot()

spec_b = ScenarioSpec(campaigns=(), seed=7)
br_b = generate(spec_b)
kept_b, _ = dedup(br_b.events)
gb, _ = build_ppg(kept_b, versioning=True)
snap_b = gb.snapshot()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    corpus = sample_benign_corpus(snap_b, size=300, seed=5)
    model = ReprModel(d=64, layers=3, seed=1)
    res = train(model, corpus, TrainConfig(epochs=30, corpus_size=300, seed=3))
print(f"pos={res.pos_mean:.3f} neg={res.neg_mean:.3f}")

# clean per-campaign samples, 3x3 score matrix
names = list(labels["campaigns"])
cfg = SamplingConfig(k=2)
clean = []
for name in names:
    pois = poi_entities(snap, labels["campaigns"][name]["pois"])
    tgs = sample(snap, pois, cfg)
    print(f"{name}: {len(tgs)} graphs, sizes {[t.graph.n_nodes for t in tgs]}")
    clean.append(max(tgs, key=lambda t: t.graph.n_nodes).graph)

mat = np.zeros((3, 3))
for i, tg in enumerate(clean):
    for j, q in enumerate(br.queries):
        mat[i, j] = model.score_many([(tg, q)])[0]
print("sample x query cosine:")
for i, name in enumerate(names):
    print(f"  {name:18s} {[round(float(x),3) for x in mat[i]]}")

# decoy hunt: print per-graph size + label + score
attack_ids = set(labels["attack_ids"])
labeler = make_labeler(snap, attack_ids)
poi_ids = [p for doc in labels["campaigns"].values() for p in doc["pois"]]
pois = sorted(poi_entities(snap, set(poi_ids)))
benign = [e for e in snap.process_entities()
          if snap.ent_id(e) not in attack_ids and e not in pois]
step = max(len(benign) // 60, 1)
pois2 = sorted(set(pois) | set(benign[::step][:60]))
tgs = sample(snap, pois2, SamplingConfig(k=2))
print(f"hunt seeds={len(pois2)} -> {len(tgs)} graphs")
for tg in sorted(tgs, key=lambda t: -t.graph.n_nodes)[:8]:
    lab = labeler(tg)
    nm = [tg.graph.nodes[i].name for i in range(min(tg.graph.n_nodes, 6))]
    print(f"  n={tg.graph.n_nodes:4d} attack={lab} sample: {nm}")
