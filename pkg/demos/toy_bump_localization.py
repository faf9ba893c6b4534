"""
Locate a narrow signal bump with the peak score where the plain density
ratio fails.

The 1-D benchmark hides 5% of the 4b sample in a narrow Gaussian at x = 7
while shifting the bulk the other way. The plain ratio gamma = p4b/p3b is
maximized far in the left tail (the bulk shift dominates), but the ratio of
gamma to its kernel-smoothed version peaks right on the bump. This script
fits both fields from samples and prints where each one peaks, next to the
exact answers.

Run:  python3 demos/toy_bump_localization.py [--n 70000] [--out-csv fields.csv]
"""

import argparse

import numpy as np

from srfilter.events import generate_toy1d
from srfilter.nnet import MLPSpec, TrainConfig
from srfilter.oracle import (argmax_on_grid, exact_gamma, exact_gamma_tilde,
                             exact_score, toy1d_setting)
from srfilter.ratio import NoiseSpec, eval_ratio, fit_ratio, fit_smoothed_ratio
from srfilter.representation import fit_passthrough, embed


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument('--n', type=int, default=70000,
                        help='events per tag and per fit (default 70000)')
    parser.add_argument('--epsilon', type=float, default=0.05,
                        help='signal fraction among 4b events')
    parser.add_argument('--seed', type=int, default=7000)
    parser.add_argument('--out-csv', default='',
                        help='optionally write the evaluated fields to a CSV')
    args = parser.parse_args()

    # two independent sample pairs, one per classifier, like the pipeline's
    # disjoint splits
    d3g, d4g = generate_toy1d(args.n, args.n, epsilon=args.epsilon, seed=args.seed)
    d3t, d4t = generate_toy1d(args.n, args.n, epsilon=args.epsilon,
                              seed=args.seed + 500)

    rmodel = fit_passthrough(d3g, d4g)
    sd = rmodel.feature_scale[0]
    Z3g, Z4g = embed(rmodel, d3g), embed(rmodel, d4g)
    Z3t, Z4t = embed(rmodel, d3t), embed(rmodel, d4t)

    spec = MLPSpec((1, 64, 64, 1))
    cfg_gamma = TrainConfig(learning_rate=2e-3, batch_size=512,
                            max_epochs=90, patience=90)
    cfg_tilde = TrainConfig(learning_rate=2e-3, batch_size=1024,
                            max_epochs=30, patience=30)

    print(f'fitting gamma on {args.n} + {args.n} events ...')
    gamma = fit_ratio(Z3g, Z4g, spec, cfg_gamma, seed=args.seed * 11 + 1)

    # the benchmark's smoothing kernel has sigma = 2 in raw feature units
    noise = NoiseSpec(eta=1.0, per_dim_scale=np.array([2.0 / sd]))
    print('fitting gamma_tilde on the smeared second pair ...')
    tilde = fit_smoothed_ratio(Z3t, Z4t, noise, spec, cfg_tilde,
                               seed=args.seed * 11 + 2)

    grid = np.arange(-10.0, 12.0001, 0.01)
    Zg = embed(rmodel, grid[:, None])
    g_hat = eval_ratio(gamma, Zg)
    t_hat = eval_ratio(tilde, Zg)
    s_hat = g_hat / t_hat

    st = toy1d_setting(args.epsilon)
    rows = [
        ('gamma', grid[np.argmax(g_hat)],
         argmax_on_grid(lambda x: exact_gamma(st, x), grid)),
        ('score', grid[np.argmax(s_hat)],
         argmax_on_grid(lambda x: exact_score(st, x), grid)),
    ]
    print()
    print('field   argmax(fit)   argmax(exact)')
    for name, fit_loc, exact_loc in rows:
        print(f'{name:6s}  {fit_loc:10.2f}   {exact_loc:10.2f}')
    i7 = np.argmin(np.abs(grid - 7.0))
    print()
    print(f'score at x=7: fitted {s_hat[i7]:.3f}, exact {exact_score(st, 7.0):.3f}')
    print('the plain ratio drifts to the left edge; the peak score finds the bump')

    if args.out_csv:
        exact_cols = np.column_stack([
            exact_gamma(st, grid), exact_gamma_tilde(st, grid), exact_score(st, grid)])
        with open(args.out_csv, 'w', encoding='utf-8') as fh:
            fh.write('x,gamma_hat,gamma_tilde_hat,score_hat,'
                     'gamma_exact,gamma_tilde_exact,score_exact\n')
            for i, x in enumerate(grid):
                vals = [g_hat[i], t_hat[i], s_hat[i], *exact_cols[i]]
                fh.write(f'{x:.2f},' + ','.join(f'{v:.8g}' for v in vals) + '\n')
        print(f'fields written to {args.out_csv}')


if __name__ == '__main__':
    main()
