import sys, warnings, time
import numpy as np
sys.path.insert(0, "src")
from provhunt.bench import ScenarioSpec, generate, bench_hunt, make_labeler
from provhunt.hunting import hunt_exhaustive
from provhunt.ingest import dedup
from provhunt.ppg import build_ppg
from provhunt.matchnet import ReprModel
from provhunt.training import TrainConfig, train, sample_benign_corpus

t0 = time.time()
spec_b = ScenarioSpec(campaigns=(), n_events=12_000, seed=7)
br_b = generate(spec_b)
kb, _ = dedup(br_b.events)
gb, _ = build_ppg(kb, versioning=True)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    corpus = sample_benign_corpus(gb.snapshot(), size=1500, seed=5)
sizes = sorted(c.n_nodes for c in corpus)
print(f"corpus 1500 sizes min/med/max={sizes[0]}/{sizes[750]}/{sizes[-1]} "
      f"[{time.time()-t0:.0f}s]", flush=True)

br = generate(ScenarioSpec(seed=0))
labels = br.labels()
kept, _ = dedup(br.events)
g, _ = build_ppg(kept, versioning=True)
snap = g.snapshot()
lab = make_labeler(snap, set(labels["attack_ids"]))

for mseed in (1, 2, 3):
    t1 = time.time()
    model = ReprModel(d=128, layers=3, seed=mseed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = train(model, corpus, TrainConfig(epochs=100, corpus_size=1500, seed=3))
    t_train = time.time() - t1
    rep = bench_hunt(br.events, labels, br.queries, model,
                     theta=0.3, k=2, decoy_pois=60)
    m = rep["metrics"]
    fp = [round(v["score"], 3) for v in rep["verdicts"]
          if v["flagged"] and not v["label"]]
    line = (f"model_seed={mseed}: train={t_train:.0f}s "
            f"pos={res.pos_mean:.3f} neg={res.neg_mean:.3f} "
            f"recall={m['recall']} fpr={round(m['fpr'],4)} auc={round(m['auc'],4)} "
            f"fp_scores={fp[:6]}{'...' if len(fp) > 6 else ''}")
    if m["recall"] == 1.0 and m["fpr"] <= 0.10:
        rx = hunt_exhaustive(snap, br.queries, model, theta=0.3, k=2, labeler=lab)
        sc = [v.score for v in rx.verdicts]
        lb = [v.label for v in rx.verdicts]
        att = [s for s, l in zip(sc, lb) if l]
        ben = [s for s, l in zip(sc, lb) if not l]
        p95 = float(np.percentile(ben, 95)) if ben else float("nan")
        ok = "OK" if att and min(att) > p95 else "FAIL"
        line += (f" | exh n={len(sc)} min_att={min(att):.3f} "
                 f"p95_ben={p95:.3f} max_ben={max(ben):.3f} {ok}")
    print(line + f" [{time.time()-t0:.0f}s]", flush=True)
