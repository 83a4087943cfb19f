"""Command-line interface.

Exit codes: 0 success, 1 a check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import checks, io, kernel, regulator, trainer
from .config import ConfigError, load_config
from .oracle import MAX_OUTCOMES, InstanceTooLarge

SEED_ENV = "STOCHDUR_SEED"

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _read(path) -> np.ndarray:
    try:
        return io.read_matrix(path)
    except io.MatrixFormatError as exc:
        raise InputError(str(exc)) from None


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map(fn, items, jobs: int):
    # results always come back in submission order
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def cmd_align(args) -> int:
    logits = _read(args.logits)
    hidden = _read(args.hidden)
    if args.frames < 1:
        raise InputError(f"--frames must be >= 1, got {args.frames}")
    if logits.shape[0] != hidden.shape[0]:
        raise InputError(f"{args.logits} has {logits.shape[0]} rows but {args.hidden} has {hidden.shape[0]}")
    if args.noise_std < 0:
        raise InputError("--noise-std must be >= 0")
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        tape = kernel.align(logits, hidden, args.frames, args.noise_std, np.random.default_rng(seed))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = _out_dir(args.out_dir)
    io.write_matrix(out / "l.csv", tape.l)
    io.write_matrix(out / "q.csv", tape.q)
    io.write_matrix(out / "s.csv", tape.s)
    io.write_matrix(out / "expanded.csv", tape.y)
    io.write_matrix(out / "expected_durations.csv", tape.expected)
    io.write_pgm(out / "s.pgm", tape.s)
    print(f"N={tape.s.shape[0]} M={tape.p.shape[1]} T={tape.n_frames}: wrote l, q, s, expanded, expected_durations, s.pgm to {out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    logits = _read(args.logits)
    if args.n_samples < 1:
        raise InputError("--n-samples must be >= 1")
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        p = kernel.apply_noisy_sigmoid(logits)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    draws = regulator.sample_many(p, args.n_samples, np.random.default_rng(seed))
    n_dur = p.shape[1]
    hist = np.stack([np.bincount(draws[:, i], minlength=n_dur + 1) for i in range(p.shape[0])]) / args.n_samples
    out = _out_dir(args.out_dir)
    io.write_matrix(out / "durations.csv", draws)
    io.write_matrix(out / "histogram.csv", hist)
    l = kernel.length_probability(p)
    print("token  " + "  ".join(f"d={m:<2d}" for m in range(n_dur + 1)) + "  max|freq-l|")
    for i in range(p.shape[0]):
        cells = "  ".join(f"{v:.3f}" for v in hist[i])
        print(f"{i:5d}  {cells}  {np.max(np.abs(hist[i] - l[i])):.4f}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    if args.max_n < 1 or args.max_m < 1 or args.n_instances < 1:
        raise InputError("--n-instances, --max-n and --max-m must be >= 1")
    worst_case = (args.max_m + 1) ** args.max_n
    if worst_case > MAX_OUTCOMES:
        raise InputError(
            f"refusing instance bounds: N={args.max_n}, M={args.max_m} allows {worst_case} joint outcomes, "
            f"above the enumeration bound of {MAX_OUTCOMES}"
        )
    seed = args.seed if args.seed is not None else _default_seed()
    specs = [(seed, k, args.max_n, args.max_m, args.max_t, args.inject_fault) for k in range(args.n_instances)]
    try:
        results = _map(checks.oracle_instance, specs, args.jobs)
    except InstanceTooLarge as exc:
        raise InputError(f"refusing instance: {exc}") from None
    worst = max(results, key=lambda r: r.max_abs_error)
    failed = [r for r in results if r.max_abs_error > checks.ORACLE_TOL]
    for r in failed[:10]:
        print(f"FAIL instance {r.index} (N={r.n_tokens}, M={r.max_duration}, T={r.n_frames}): max abs error {r.max_abs_error:.3e} in {r.worst_field}")
    status = "PASS" if not failed else "FAIL"
    print(
        f"{status}: {len(results) - len(failed)}/{len(results)} instances within {checks.ORACLE_TOL:g}; "
        f"max abs error {worst.max_abs_error:.3e} (instance {worst.index}, {worst.worst_field})"
    )
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_gradcheck(args) -> int:
    if args.eps <= 0 or args.n_instances < 1:
        raise InputError("--eps must be > 0 and --n-instances >= 1")
    seed = args.seed if args.seed is not None else _default_seed()
    specs = [(seed, k, args.eps, args.precision) for k in range(args.n_instances)]
    results = _map(checks.gradcheck_instance, specs, args.jobs)
    rows = [(r.index, name, rep) for r in results for name, rep in r.reports.items()]
    worst = max(rows, key=lambda row: row[2].max_rel_error)
    failed = [row for row in rows if not row[2].max_rel_error <= checks.GRAD_TOL]
    for index, name, rep in failed[:10]:
        print(f"FAIL instance {index} {name}: rel error {rep.max_rel_error:.3e} at coordinate {rep.worst_index} {rep.message}")
    status = "PASS" if not failed else "FAIL"
    print(
        f"{status}: {len(rows) - len(failed)}/{len(rows)} gradient checks within {checks.GRAD_TOL:g} "
        f"(eps={args.eps:g}, {args.precision} precision differences)"
    )
    print(f"worst: instance {worst[0]} {worst[1]} coordinate {worst[2].worst_index} rel error {worst[2].max_rel_error:.3e}")
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_train_toy(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        raise InputError(str(exc)) from None
    try:
        task = trainer.make_task(
            cfg.task.n_tokens, cfg.kernel.M, cfg.task.embed_dim, cfg.task.seed, cfg.task.target_noise, cfg.kernel.T
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    report = trainer.train(task, cfg.train_config())
    out = _out_dir(args.out_dir)
    summary = report.to_dict()
    summary["true_durations"] = task.durations.tolist()
    io.write_json(out / "report.json", summary)
    series = np.column_stack([report.loss, report.length_loss, report.recon_loss, report.discreteness]).reshape(-1, 4)
    with open(out / "losses.csv", "w") as fh:
        fh.write("step,loss,length_loss,recon_loss,discreteness\n")
        for step, row in enumerate(series):
            fh.write(f"{step}," + ",".join(repr(float(v)) for v in row) + "\n")
    final = kernel.align(report.final_logits, task.h, task.n_frames)
    io.write_pgm(out / "s.pgm", final.s)
    print(
        f"steps={len(report.loss)} duration MAE={report.duration_mae:.3f} "
        f"hard match={report.hard_match_rate:.3f} discreteness={report.final_discreteness:.4f}"
        + (" DIVERGED" if report.diverged else "")
    )
    return EXIT_FAIL if report.diverged else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochdur", description="Differentiable stochastic duration alignment toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="compute l, q, s and the expected upsampled output")
    p.add_argument("--logits", required=True, help="N x M logit matrix (CSV)")
    p.add_argument("--hidden", required=True, help="N x D hidden sequence (CSV)")
    p.add_argument("--frames", type=int, required=True, help="number of output frames T")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("sample", help="sample hard durations from logits")
    p.add_argument("--logits", required=True)
    p.add_argument("--n-samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("oracle-check", help="compare the kernel with brute-force enumeration")
    p.add_argument("--n-instances", type=int, default=200)
    p.add_argument("--max-n", type=int, default=4)
    p.add_argument("--max-m", type=int, default=5)
    p.add_argument("--max-t", type=int, default=12)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--inject-fault", action="store_true", help="perturb the kernel output to confirm the check can fail")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with central differences")
    p.add_argument("--n-instances", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--precision", choices=("extended", "double"), default="extended",
                   help="precision of the finite-difference evaluations")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", help="learn an alignment on a synthetic task")
    p.add_argument("--config", required=True, help="JSON configuration")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train_toy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
