"""Sweep the adversarial weight and watch the accuracy/invariance trade-off.

lam = 0 disables the domain-adversarial term entirely; large lam lets the
gradient-reversal signal dominate the classification objective.  The sweep
writes the same CSV + gnuplot-style .dat pair as the CLI subcommand.
"""

from pathlib import Path
from tempfile import TemporaryDirectory

from dgfd.config import build_manifest
from dgfd.pipeline import run_sweep_lambda

raw = {
    "experiment": {"name": "sweep-demo", "out_dir": "unused", "seeds": [0]},
    "data": {"n_domains": 3, "samples_per_domain": 20, "image_size": 32, "seed": 0},
    "model": {"widths": [4, 8, 8, 16], "embed_dim": 8, "head_hidden": 16,
              "n_experts": 2, "use_dd": True},
    "train": {"epochs": 3, "batch_size": 16, "lr": 2e-3, "C": 2,
              "bank_max_per_class": 8, "grl_warmup_epochs": 1},
}

with TemporaryDirectory() as tmp:
    manifest = build_manifest(raw, env={})
    result = run_sweep_lambda(manifest, lambdas=[0.0, 0.5, 2.0], out_dir=Path(tmp))
    print("lam    test-acc  test-auc  test-eer")
    for row in result["rows"]:
        print(f"{row['lam']:<6} {row['acc']:.3f}     {row['auc']:.3f}     {row['eer']:.3f}")
    print(f"\nwrote {result['sweep_csv'].name} and {result['plot'].name}")
    print((Path(tmp) / "sweep_plot.dat").read_text().rstrip())
