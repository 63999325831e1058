"""Leave-one-subject-out comparison of the recognizer architectures.

Trains each requested architecture once per held-out subject and prints a
mean/std accuracy table.  Point it at a dataset directory produced by
`python -m signrec synth` (or pass --generate for a quick built-in set).
"""

from argparse import ArgumentParser
from pathlib import Path

from signrec.data import load_dataset
from signrec.evaluate import cross_subject_experiment
from signrec.models import CnnConfig, Hyperparams, default_learning_rate
from signrec.synthetic import SynthConfig, generate_synthetic


def get_args():
    parser = ArgumentParser(description=__doc__)
    parser.add_argument("--data", type=Path, help="dataset directory")
    parser.add_argument("--generate", action="store_true",
                        help="use a small built-in synthetic benchmark instead of --data")
    parser.add_argument("--models", nargs="+",
                        default=["ai-lstm", "spatial-ai-lstm", "max-fusion"],
                        help="architectures to compare")
    parser.add_argument("--epochs", type=int, default=15)
    parser.add_argument("--lr", type=float, default=None,
                        help="learning rate (default: per-architecture)")
    parser.add_argument("--state-size", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel folds (processes)")
    parser.add_argument("--out", type=Path, default=None,
                        help="write metrics.json + confusion CSVs per model here")
    return parser.parse_args()


def benchmark_dataset():
    return generate_synthetic(SynthConfig(
        num_classes=20,
        num_subjects=12,
        samples_per_class_per_subject=3,
        twin_class_pairs=((0, 1), (2, 3), (4, 5), (6, 7)),
        relation_class_pairs=((8, 9), (10, 11), (12, 13), (14, 15)),
        offset_range=0.7,
        hand_frames=9,
        hand_size=14,
        rng_seed=0,
    ))


def main():
    args = get_args()
    if args.generate:
        data = benchmark_dataset()
        cnn = CnnConfig(channels=(4, 8, 8, 16), kernel=(2, 3, 3), pool1=(2, 2, 2),
                        pool2=(1, 1, 1), fc1=48, fc2=24, in_frames=9, in_size=14)
    elif args.data:
        data = load_dataset(args.data)
        cnn = CnnConfig()
    else:
        raise SystemExit("pass --data DIR or --generate")

    print(f"{len(data.samples)} samples, {data.num_classes} classes, "
          f"{len(data.subjects)} subjects")
    results = {}
    for arch in args.models:
        hp = Hyperparams(
            learning_rate=args.lr if args.lr is not None else default_learning_rate(arch),
            epochs=args.epochs, state_size=args.state_size, seed=args.seed,
        )
        out_dir = args.out / arch if args.out else None
        res = cross_subject_experiment(data, arch, hp, cnn_config=cnn,
                                       jobs=args.jobs, out_dir=out_dir, log=print)
        results[arch] = res
        print(f"{arch}: mean {res.mean_accuracy:.3f} std {res.std_accuracy:.3f}")

    print("\narchitecture            mean    std")
    for arch, res in results.items():
        print(f"{arch:<22}  {res.mean_accuracy:.3f}  {res.std_accuracy:.3f}")


if __name__ == "__main__":
    main()
