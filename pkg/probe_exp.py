import sys
sys.path.insert(0, "src")
from provhunt.bench import ScenarioSpec, generate
from provhunt.ingest import dedup
from provhunt.ppg import build_ppg

br = generate(ScenarioSpec(seed=0))
kept, _ = dedup(br.events)
g, _ = build_ppg(kept, versioning=True)
snap = g.snapshot()

def subject_edge_count(e):
    return sum(1 for _ in snap.subject_events(e))

exp0_shell, exp0_job, n_shell, n_job = [], [], 0, 0
for e in range(snap.n_entities):
    name = snap.ent_name(e)
    if name.startswith("bash") and not name.startswith("bash-"):
        n_shell += 1
        if snap.ent_exp(e) == 0:
            exp0_shell.append((name, subject_edge_count(e)))
    elif name.startswith("job"):
        n_job += 1
        if snap.ent_exp(e) == 0:
            exp0_job.append((name, subject_edge_count(e)))

print(f"shells: {n_shell} total, {len(exp0_shell)} exp0; sample: {exp0_shell[:6]}")
print(f"jobs:   {n_job} total, {len(exp0_job)} exp0; sample: {exp0_job[:6]}")

for nm in ("bash0000", "job0004", "bash0001"):
    for e in range(snap.n_entities):
        if snap.ent_name(e) == nm:
            evs = list(snap.subject_events(e))
            print(f"{nm}: exp={snap.ent_exp(e)} subject_edges={len(evs)}")
            from collections import Counter
            c = Counter((snap.ent_name(x.obj_ent), x.op.name) for x in evs)
            print(f"   {dict(c)}")
            break
