"""
Noise-scale study on the 16-D physics-like generator.

Runs the full pipeline (split, representation, plain and smoothed ratio
fits, scoring, enrichment curves) over a few repeats for three smoothing
scales eta, then reports the mean curve AUC per eta. The generator plants
a narrow signal blob on (pt1, m1..m4) and a smooth downward mass tilt in
the 4-jet background; the interesting regime is eta near the blob's
relative width. Much smaller and the smoothed ratio still resolves the
blob, so the ratio of ratios cancels part of the signal; much larger and
the smoothed fit goes flat, leaving the background tilt in the score.
In between, the smoothed fit absorbs the tilt but not the blob, and the
enrichment AUC peaks.

At the default budget the oversized scale's failure is already clear
(eta = 1 trails by a wide margin); the undersized scale's cancellation
builds up with sample size and training length, so the full three-way
ordering needs roughly --n 100000 --epochs 300.

Both fits use deliberately small single-hidden-layer networks trained to
plateau: at this sample size wider networks overfit their validation
trough within a few epochs and the restored parameters vary wildly from
repeat to repeat.

Run:  python3 demos/physics_noise_scales.py [--n 50000] [--repeats 3] --out out_dir
"""

import argparse

from srfilter.experiment import config_from_mapping, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument('--n', type=int, default=50000,
                        help='events per tag (default 50000)')
    parser.add_argument('--epsilon', type=float, default=0.05)
    parser.add_argument('--repeats', type=int, default=3)
    parser.add_argument('--seed', type=int, default=11)
    parser.add_argument('--epochs', type=int, default=150,
                        help='training epochs for both fits (default 150)')
    parser.add_argument('--out', required=True, help='output directory')
    args = parser.parse_args()

    cfg = config_from_mapping({
        'source': 'physics_like',
        'n': str(args.n),
        'm': str(args.n),
        'epsilon': str(args.epsilon),
        'seed': str(args.seed),
        'repeats': str(args.repeats),
        'eta': '0.01 0.1 1.0',
        'split': '0.6 0.2 0.2',
        'net.gamma.hidden': '24',
        'net.gamma_tilde.hidden': '24',
        'train.gamma.max_epochs': str(args.epochs),
        'train.gamma.batch_size': '512',
        'train.gamma.patience': str(args.epochs),
        'train.gamma.learning_rate': '0.0015',
        'train.gamma.validation_fraction': '0.2',
        'train.gamma_tilde.max_epochs': str(args.epochs),
        'train.gamma_tilde.batch_size': '512',
        'train.gamma_tilde.patience': str(args.epochs),
        'train.gamma_tilde.learning_rate': '0.002',
        'train.gamma_tilde.validation_fraction': '0.2',
        'physics.signal_pt_mean': '160.0',
        'physics.signal_pt_sigma': '12.0',
        'physics.signal_m_mean': '30 24 19.5 16.5',
        'physics.signal_m_sigma': '2.4 1.9 1.6 1.3',
        'physics.m_log_shift_4b': '0 -0.25 -0.18 -0.12',
    })

    print(f'running {args.repeats} repeats at n = m = {args.n} ...')
    report = run_experiment(cfg, args.out)
    print()
    for line in report.summary_lines():
        print(line)
    print()
    print(f'per-repeat and mean curves, plus the manifest, are under {args.out}')


if __name__ == '__main__':
    main()
