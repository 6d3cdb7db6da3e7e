import json
import time

from gridvla.codec import ModalityConfig
from gridvla.evaluation import load_policy, rollout
from gridvla.train import TrainConfig, train

t0 = time.time()
cfg = TrainConfig(
    dataset_path="demos400.jsonl",
    out_dir="long_chunk2_seed0",
    modality=ModalityConfig(chunk_size=2),
    epochs=70,
    checkpoint_epochs=(25, 35, 50, 60, 70),
    seed=0,
)
paths = train(cfg)
print(f"trained 70 epochs in {time.time()-t0:.0f}s", flush=True)
for p in paths:
    policy = load_policy(p)
    results = [rollout(policy, "place_at", 2, 100000 + i, "act") for i in range(80)]
    rate = sum(r.success for r in results) / len(results)
    print(f"{p.split('/')[-1]}: act success {rate:.0%}", flush=True)
rows = [json.loads(l) for l in open("long_chunk2_seed0/metrics.jsonl")]
for r in rows[::10]:
    print(f"epoch {r['epoch']}: act {r['loss_act']:.4f}", flush=True)
