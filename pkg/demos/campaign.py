"""Run a small campaign over every attack and print the markdown report.

One prompt style, all fifteen attacks, a few trials per cell, the mock
backend. Pass a different style name as the first argument to switch.

    python demos/campaign.py [LLaSA|IMUGPT2|HARGPT|ContextGPT|MotionGPT]
"""

import sys
import time

from har_guard.backends import MockBackend
from har_guard.evaluation import CampaignConfig, compute_metrics, render_md, run_campaign


def main(style="LLaSA"):
    cfg = CampaignConfig.from_dict({"styles": [style], "attacks": "all", "trials_per_cell": 6, "seed": 1})
    t0 = time.perf_counter()
    records = run_campaign(cfg, MockBackend())
    elapsed = time.perf_counter() - t0
    metrics = compute_metrics(records)
    print(render_md(metrics))
    o = metrics["overall"]
    print(f"{len(records)} trials in {elapsed:.1f} s; ASR {o['ASR_undefended']:.3f} -> {o['ASR_defended']:.3f}")


if __name__ == "__main__":
    main(*sys.argv[1:2])
