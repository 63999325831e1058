"""Accuracy on a held-out signer as their own data enters the train set.

For each fraction f, f of the target subject's samples join the other
subjects' data for training; evaluation always uses the same fixed half of
the target's samples, so points along the curve are comparable.
"""

from argparse import ArgumentParser
from pathlib import Path

from signrec.data import load_dataset
from signrec.evaluate import adaptation_curve
from signrec.models import Hyperparams
from signrec.synthetic import SynthConfig, generate_synthetic


def get_args():
    parser = ArgumentParser(description=__doc__)
    parser.add_argument("--data", type=Path, help="dataset directory")
    parser.add_argument("--generate", action="store_true",
                        help="use a small built-in personalization benchmark")
    parser.add_argument("--subject", default=None,
                        help="target subject id (default: last in the dataset)")
    parser.add_argument("--fractions", type=float, nargs="+",
                        default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    parser.add_argument("--model", default="ai-lstm")
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--lr", type=float, default=2e-3)
    parser.add_argument("--seed", type=int, default=0)
    return parser.parse_args()


def benchmark_dataset():
    return generate_synthetic(SynthConfig(
        num_classes=5,
        num_subjects=4,
        samples_per_class_per_subject=20,
        offset_range=0.7,
        scale_range=(0.9, 1.1),
        speed_range=(0.8, 1.25),
        with_hand_volumes=False,
        rng_seed=23,
    ))


def main():
    args = get_args()
    if args.generate:
        data = benchmark_dataset()
    elif args.data:
        data = load_dataset(args.data)
    else:
        raise SystemExit("pass --data DIR or --generate")
    subject = args.subject or data.subjects[-1]
    hp = Hyperparams(learning_rate=args.lr, epochs=args.epochs, seed=args.seed,
                     dropout_keep=1.0, early_stop_accuracy=0.995)
    curve = adaptation_curve(data, subject, args.fractions, args.model, hp, log=print)
    print(f"\nadaptation curve for {subject} ({args.model}):")
    for fraction, acc in curve:
        bar = "#" * round(40 * acc)
        print(f"  {fraction:4.2f}  {acc:.3f}  {bar}")


if __name__ == "__main__":
    main()
