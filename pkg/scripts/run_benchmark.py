"""Headline benchmark: train on Virtual scenes, predict occluded pedestrians.

Generates the default synthetic corpus, trains the embedding model on
the Virtual training fold, and scores one-vs-rest occluded-pedestrian
detection on the held-out Virtual scenes at a 30-frame horizon.  With
the default seeds this reaches occluded-class F1 ~0.93 in about two
minutes.  Pass --out to keep the JSON report and per-frame predictions.
"""

import argparse
import json
import time
from pathlib import Path

from occlukg.harness import ExperimentSpec, run_experiment_with_predictions
from occlukg.kge.train import TrainingConfig
from occlukg.scenes import Environment
from occlukg.synth import default_config, generate_corpus


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    return ExperimentSpec(
        train_environments=(Environment.VIRTUAL,),
        test_environments=(Environment.VIRTUAL,),
        counts={Environment.REAL: (32, 8), Environment.VIRTUAL: (50, 9)},
        horizon=args.horizon,
        training=TrainingConfig(
            k=args.k,
            eta=15,
            learning_rate=0.05,
            batch_size=2048,
            max_epochs=args.epochs,
            check_every=1000,
            patience=5,
            seed=args.train_seed,
        ),
        seed=args.fold_seed,
        validation_ratio=0.0,
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus-seed", type=int, default=0)
    parser.add_argument("--fold-seed", type=int, default=13)
    parser.add_argument("--train-seed", type=int, default=0)
    parser.add_argument("--k", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--horizon", type=int, default=30)
    parser.add_argument("--out", type=Path, default=None, help="directory for JSON artifacts")
    args = parser.parse_args()

    start = time.monotonic()
    corpus = generate_corpus(default_config(), seed=args.corpus_seed)
    print(f"corpus: {len(corpus)} scenes, {sum(len(d.frames) for d in corpus)} frames")

    report, predictions = run_experiment_with_predictions(corpus, build_spec(args))
    duration = time.monotonic() - start

    cm = report.confusion
    print(f"experiment: {report.spec_echo['label']}, horizon {args.horizon}")
    print(f"test frames: {report.n_frames}")
    print(f"occluded-class precision {report.precision:.3f} "
          f"recall {report.recall:.3f} F1 {report.f1:.3f}")
    print(f"confusion: tp {cm.tp}  fp {cm.fp}  fn {cm.fn}  tn {cm.tn}")
    print(f"diagnostics: clamp_rate {report.clamp_rate:.3f} "
          f"truncation_rate {report.truncation_rate:.3f} "
          f"oov_item_rate {report.oov_item_rate:.3f}")
    print(f"calibration: a {report.calibration['a']:.4f} b {report.calibration['b']:.4f}")
    print(f"wall time: {duration:.0f}s")

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(
            json.dumps(report.to_record(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        (args.out / "predictions.jsonl").write_text(
            "".join(json.dumps(p.to_record(), sort_keys=True) + "\n" for p in predictions),
            encoding="utf-8",
        )
        print(f"wrote report.json and predictions.jsonl to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
