import sys, warnings
sys.path.insert(0, "src")
import numpy as np
from provhunt.bench import ScenarioSpec, generate, make_labeler
from provhunt.ingest import dedup
from provhunt.ppg import build_ppg
from provhunt.graphs import poi_entities
from provhunt.matchnet import ReprModel
from provhunt.training import TrainConfig, train, sample_benign_corpus
from provhunt.sampler import SamplingConfig, sample
from provhunt.hunting import _score_matrix, to_attr_graph

br = generate(ScenarioSpec(seed=0))
labels = br.labels()
kept, _ = dedup(br.events)
g, _ = build_ppg(kept, versioning=True)
snap = g.snapshot()

spec_b = ScenarioSpec(campaigns=(), seed=7)
br_b = generate(spec_b)
kb, _ = dedup(br_b.events)
gb, _ = build_ppg(kb, versioning=True)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    corpus = sample_benign_corpus(gb.snapshot(), size=300, seed=5)
    model = ReprModel(d=64, layers=3, seed=1)
    train(model, corpus, TrainConfig(epochs=30, corpus_size=300, seed=3))

attack_ids = set(labels["attack_ids"])
labeler = make_labeler(snap, attack_ids)
poi_ids = [p for doc in labels["campaigns"].values() for p in doc["pois"]]
pois = sorted(poi_entities(snap, set(poi_ids)))
benign = [e for e in snap.process_entities()
          if not snap.ent_exp(e)
          and snap.ent_id(e) not in attack_ids and e not in pois]
step = max(len(benign) // 60, 1)
pois2 = sorted(set(pois) | set(benign[::step][:60]))
tgs = sample(snap, pois2, SamplingConfig(k=2))
qg = [to_attr_graph(q) for q in br.queries]
mat = _score_matrix(model, qg, [t.graph for t in tgs])
for i, tg in enumerate(tgs):
    s = float(np.max(mat[i]))
    if s >= 0.3 and not labeler(tg):
        names = sorted(tg.graph.nodes[j].name for j in range(tg.graph.n_nodes))
        print(f"FP {s:+.3f} n={tg.graph.n_nodes} best_q={int(np.argmax(mat[i]))} {names}")
