"""Where does hand appearance rescue skeleton-identical gesture pairs?

Runs leave-one-subject-out folds of the skeleton LSTM and the
skeleton+hand max-fusion model on a benchmark whose twin classes share
exact wrist trajectories and differ only in hand shape, then reports
pairwise accuracy per twin pair for both models.
"""

from argparse import ArgumentParser

import numpy as np

from signrec.data import split_cross_subject
from signrec.evaluate import pairwise_accuracy, predictions_report
from signrec.models import CnnConfig, Hyperparams, train
from signrec.synthetic import SynthConfig, generate_synthetic

TWIN_PAIRS = ((0, 1), (2, 3), (4, 5), (6, 7))


def get_args():
    parser = ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=15)
    parser.add_argument("--cnn-epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--subjects", type=int, default=12)
    return parser.parse_args()


def main():
    args = get_args()
    data = generate_synthetic(SynthConfig(
        num_classes=20,
        num_subjects=args.subjects,
        samples_per_class_per_subject=3,
        twin_class_pairs=TWIN_PAIRS,
        relation_class_pairs=((8, 9), (10, 11), (12, 13), (14, 15)),
        offset_range=0.7,
        hand_frames=9,
        hand_size=14,
        rng_seed=0,
    ))
    cnn = CnnConfig(channels=(4, 8, 8, 16), kernel=(2, 3, 3), pool1=(2, 2, 2),
                    pool2=(1, 1, 1), fc1=48, fc2=24, in_frames=9, in_size=14)
    hp_l = Hyperparams(learning_rate=2e-3, epochs=args.epochs, seed=args.seed)
    hp_c = Hyperparams(learning_rate=2e-3, epochs=args.cnn_epochs, dropout_keep=0.8,
                       early_stop_accuracy=0.995, seed=args.seed)

    skel_reports, fused_reports = [], []
    for subject in data.subjects:
        train_d, test_d = split_cross_subject(data, subject)
        m_skel = train("ai-lstm", train_d, hp_l)
        m_cnn = train("cnn3d", train_d, hp_c, cnn)
        p_skel = m_skel.predict_probs(m_skel.prepare(test_d.samples))
        p_cnn = m_cnn.predict_probs(m_cnn.prepare(test_d.samples))
        fused = np.maximum(p_skel, p_cnn)
        skel_reports.append(predictions_report(
            test_d, p_skel.argmax(axis=1), data.num_classes, subject))
        fused_reports.append(predictions_report(
            test_d, fused.argmax(axis=1), data.num_classes, subject))
        print(f"{subject}: skeleton {skel_reports[-1].accuracy:.3f} "
              f"fused {fused_reports[-1].accuracy:.3f}")

    print("\ntwin pair   skeleton  fused")
    for pair in TWIN_PAIRS:
        s = pairwise_accuracy(skel_reports, list(pair))
        f = pairwise_accuracy(fused_reports, list(pair))
        print(f"{pair[0]:>2} vs {pair[1]:<2}    {s:.3f}     {f:.3f}")
    s_all = np.mean([pairwise_accuracy(skel_reports, list(p)) for p in TWIN_PAIRS])
    f_all = np.mean([pairwise_accuracy(fused_reports, list(p)) for p in TWIN_PAIRS])
    print(f"mean        {s_all:.3f}     {f_all:.3f}")


if __name__ == "__main__":
    main()
