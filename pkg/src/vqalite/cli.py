"""Command-line surface: gen-data, train, eval, ablate, gradcheck."""

import argparse
import os
import sys
import time

import numpy as np

from . import data as D
from . import tensor as T
from .attention import GlimpseAttention
from .config import ConfigError, ModelConfig
from .counting import build_box_geometry, count_vectors
from .gradcheck import grad_check
from .layers import BatchNorm1d, Conv2d, GRUCell, Linear
from .metrics import HEADERS
from .model import FusionHead, cross_entropy
from .text import QuestionEncoder, Vocabulary, build_vocabulary
from .train import (
    ablation_table,
    build_model,
    evaluate,
    load_for_eval,
    prepare,
    run_ablations,
    train,
)
from .vision import ImageEncoder, l2_normalize_features


def _resolve_config(args):
    config = ModelConfig.load(args.config) if args.config else ModelConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "token_size", None) is not None:
        overrides["token_size"] = args.token_size
    return config.replace(**overrides) if overrides else config.validate()


def _write_report(report, out_dir, stem):
    os.makedirs(out_dir, exist_ok=True)
    txt = os.path.join(out_dir, stem + ".txt")
    csv = os.path.join(out_dir, stem + ".csv")
    with open(txt, "w", encoding="utf-8") as fh:
        fh.write(report.table() + "\n")
    with open(csv, "w", encoding="utf-8") as fh:
        fh.write(report.csv())
    return txt, csv


def cmd_gen_data(args):
    config = _resolve_config(args)
    samples = D.generate_dataset(config.seed, args.pairs_per_category)
    D.write_dataset(samples, args.out)
    print(
        f"wrote {len(samples)} samples ({args.pairs_per_category} pairs x "
        f"{len(D.CATEGORIES)} categories) to {args.out}"
    )
    return 0


def cmd_train(args):
    config = _resolve_config(args)
    samples = D.read_dataset(args.data)
    train_samples, val_samples = D.split_by_pair(samples, args.val_pairs, config.seed)
    early = None if args.no_early_stop else (0.92, 0.82)
    result = train(
        config,
        train_samples,
        val_samples,
        args.out,
        mode=args.mode,
        early_stop=early,
        verbose=not args.quiet,
    )
    print(result.best_val.table(label=f"best val (epoch {result.best_epoch})"))
    print(result.final_train.table(label="train split"))
    print(
        f"epochs run: {result.epochs_run}  elapsed: {result.elapsed:.1f}s  "
        f"checkpoint: {result.checkpoint_path}"
    )
    _write_report(result.best_val, args.out, "metrics")
    return 0


def cmd_eval(args):
    config = ModelConfig.load(os.path.join(args.checkpoint, "config.txt"))
    vocab = Vocabulary.load(os.path.join(args.checkpoint, "vocab.txt"))
    model = load_for_eval(
        config, os.path.join(args.checkpoint, "model.ckpt"), len(vocab), mode=args.mode
    )
    samples = D.read_dataset(args.data)
    prep = prepare(samples, vocab, config.count_tau, config.count_kappa)
    report, _ = evaluate(model, prep)
    print(report.table(label=f"eval on {args.data} ({len(samples)} samples)"))
    out_dir = args.out or args.checkpoint
    txt, csv = _write_report(report, out_dir, "metrics")
    print(f"wrote {txt} and {csv}")
    return 0


def cmd_ablate(args):
    config = _resolve_config(args)
    samples = D.read_dataset(args.data)
    train_samples, val_samples = D.split_by_pair(samples, args.val_pairs, config.seed)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    results = run_ablations(
        config, train_samples, val_samples, args.out, modes=modes, verbose=not args.quiet
    )
    table = ablation_table(results)
    print(table)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "ablation.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    with open(os.path.join(args.out, "ablation.csv"), "w", encoding="utf-8") as fh:
        fh.write("mode," + ",".join(HEADERS) + "\n")
        for mode, res in results.items():
            cells = ",".join(f"{100.0 * v:.4f}" for v in res.best_val.values())
            fh.write(f"{mode},{cells}\n")
    return 0


# ---- gradient checking harness ----


def _gradcheck_suite(config):
    """(name, tol, max_coords, h, fn, params) per layer, then end to end.

    Smooth layers get the tight 1e-6 tolerance at the default step.
    Checks whose loss crosses relu/clamp/hat kinks run at tol 1e-4 with
    a smaller step, shrinking the window in which a perturbation flips a
    kink and corrupts the difference quotient.
    """
    rng = np.random.default_rng(7)
    checks = []

    x = T.parameter(rng.standard_normal((3, 5)))
    lin = Linear(np.random.default_rng(8), 5, 4)
    checks.append(
        (
            "linear",
            1e-6,
            64,
            1e-5,
            lambda: T.tsum(T.square(lin(x))),
            [("x", x), ("weight", lin.weight), ("bias", lin.bias)],
        )
    )

    xc = T.parameter(rng.standard_normal((2, 3, 6, 6)))
    conv = Conv2d(np.random.default_rng(9), 3, 4, 3, padding=1)
    checks.append(
        (
            "conv2d",
            1e-6,
            64,
            1e-5,
            lambda: T.tsum(T.square(conv(xc))),
            [("x", xc), ("weight", conv.weight), ("bias", conv.bias)],
        )
    )

    xg = T.parameter(rng.standard_normal((3, 5)))
    hg = T.parameter(rng.standard_normal((3, 4)))
    gru = GRUCell(np.random.default_rng(10), 5, 4)
    checks.append(
        (
            "gru_cell",
            1e-6,
            64,
            1e-5,
            lambda: T.tsum(T.square(gru(xg, hg))),
            [("x", xg), ("h", hg)] + list(gru.named_parameters()),
        )
    )

    xb = T.parameter(rng.standard_normal((6, 5)))
    bn = BatchNorm1d(5)
    wfix = T.Tensor(rng.standard_normal((6, 5)))
    checks.append(
        (
            "batchnorm",
            1e-6,
            64,
            1e-5,
            lambda: T.tsum(T.mul(bn(xb), wfix)),
            [("x", xb), ("gamma", bn.gamma), ("beta", bn.beta)],
        )
    )

    qenc = QuestionEncoder(np.random.default_rng(11), 7, 6, 5)
    ids = np.array([[2, 3, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0], [5, 6, 2, 3, 2, 6, 5, 4, 3, 2, 6, 5]])
    lengths = np.array([3, 12])
    checks.append(
        (
            "question_encoder",
            1e-6,
            48,
            1e-5,
            lambda: T.tsum(T.square(qenc(ids, lengths))),
            list(qenc.named_parameters()),
        )
    )

    xi = T.parameter(rng.uniform(0.0, 1.0, size=(2, 3, 64, 64)))
    enc = ImageEncoder(np.random.default_rng(12))
    checks.append(
        (
            "image_encoder",
            1e-4,
            8,
            1e-6,
            lambda: T.tsum(T.square(l2_normalize_features(enc(xi)))),
            [("image", xi)] + list(enc.named_parameters()),
        )
    )

    va = T.parameter(rng.standard_normal((2, 8, 4, 4)) * 0.3)
    qa = T.parameter(rng.standard_normal((2, 6)) * 0.3)
    attn = GlimpseAttention(np.random.default_rng(13), 8, 6, 10)
    def attn_loss():
        att, maps = attn(va, qa)
        return T.add(T.tsum(T.square(att)), T.tsum(T.square(maps)))
    checks.append(
        (
            "attention",
            1e-4,
            32,
            1e-6,
            attn_loss,
            [("v", va), ("q", qa)] + list(attn.named_parameters()),
        )
    )

    boxes = np.array(
        [[0.1, 0.1, 0.35, 0.4], [0.5, 0.5, 0.8, 0.85], [0.55, 0.52, 0.82, 0.8]]
    )
    geom = build_box_geometry(boxes, 4, 4)
    logits_c = T.parameter(rng.standard_normal((2, 16)))
    checks.append(
        (
            "counter",
            1e-4,
            32,
            1e-6,
            lambda: T.tsum(T.square(count_vectors(logits_c, [geom, geom], 10))),
            [("logits", logits_c)],
        )
    )

    vh = T.parameter(rng.standard_normal((4, 12)) * 0.5)
    qh = T.parameter(rng.standard_normal((4, 6)) * 0.5)
    ch = T.parameter(rng.uniform(0.0, 1.0, size=(4, 11)))
    head = FusionHead(np.random.default_rng(14), 12, 6, 11, 16, 8)
    targets = np.array([1, 3, 0, 7])
    checks.append(
        (
            "fusion_head",
            1e-4,
            48,
            1e-6,
            lambda: cross_entropy(head(vh, qh, ch), targets),
            [("v_att", vh), ("q", qh), ("c", ch)] + list(head.named_parameters()),
        )
    )

    # end to end on a real tiny batch, reduced widths, full architecture
    small = config.replace(
        embedding_dim=24, gru_hidden=16, attn_width=32, fused_width=48, dropout_rate=0.0
    )
    samples = D.generate_dataset(master_seed=5, pairs_per_category=1)[:2]
    vocab = build_vocabulary((s.question_tokens for s in samples), small.token_size)
    model, _ = build_model(small, len(vocab), len(D.ANSWER_INDEX))
    batch = prepare(samples, vocab, small.count_tau, small.count_kappa)
    idx = np.arange(2)
    def e2e_loss():
        from .train import forward_batch

        logits = forward_batch(model, batch, idx)
        return cross_entropy(logits, batch.targets[idx], small.label_smoothing)
    checks.append(("end_to_end", 1e-4, 6, 1e-6, e2e_loss, list(model.named_parameters())))
    return checks


def run_gradcheck(config=None, corrupt=None, verbose=True):
    """Finite-difference checks for every layer plus the full loss.

    Returns (ok, report_lines). 64-bit throughout.
    """
    config = config or ModelConfig()
    lines = []
    ok = True
    matched_corrupt = corrupt is None
    t0 = time.time()
    with T.default_dtype(np.float64):
        for name, tol, max_coords, h, fn, params in _gradcheck_suite(config):
            t1 = time.time()
            here = corrupt if corrupt in [nm for nm, _ in params] else None
            matched_corrupt = matched_corrupt or here is not None
            report = grad_check(fn, params, h=h, tol=tol, max_coords=max_coords, corrupt=here)
            status = "PASS" if report.ok else "FAIL"
            ok = ok and report.ok
            lines.append(
                f"[{status}] {name:18s} max_rel_err={report.max_rel_err:.3e} "
                f"tol={tol:.0e} ({time.time() - t1:.1f}s)"
            )
            if not report.ok:
                for entry in report.lines():
                    if entry.startswith("FAIL"):
                        lines.append("    " + entry)
    if not matched_corrupt:
        ok = False
        lines.append(f"error: --corrupt-param {corrupt!r} matched no checked tensor")
    lines.append(f"total {time.time() - t0:.1f}s: {'all passed' if ok else 'FAILURES above'}")
    if verbose:
        for line in lines:
            print(line, flush=True)
    return ok, lines


def cmd_gradcheck(args):
    config = _resolve_config(args)
    ok, _ = run_gradcheck(config, corrupt=args.corrupt_param)
    return 0 if ok else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="vqalite",
        description="Synthetic VQA with glimpse attention and a differentiable counter",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a key=value config file")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("gen-data", help="generate a balanced-pair synthetic dataset")
    common(p)
    p.add_argument("--pairs-per-category", type=int, default=3500)
    p.add_argument("--out", required=True, help="output dataset file")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", required=True, help="dataset file from gen-data")
    p.add_argument("--out", default="runs/train", help="output directory")
    p.add_argument("--mode", default="none", help="ablation mode")
    p.add_argument("--val-pairs", type=int, default=500, help="held-out pairs per category")
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--token-size", type=int, help="override config token_size")
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True, help="directory written by train")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", default="none")
    p.add_argument("--out", help="where to write metrics.txt/.csv (default: checkpoint dir)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare ablation modes")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="runs/ablate")
    p.add_argument("--val-pairs", type=int, default=500)
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument(
        "--modes",
        default="none,no-count,no-text,no-attention,no-attn-count",
        help="comma-separated ablation modes",
    )
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.add_argument(
        "--corrupt-param",
        help="self-test hook: double this tensor's analytic gradient and expect a failure",
    )
    p.set_defaults(fn=cmd_gradcheck)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, D.DatasetFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
