"""Command-line entry point: ``bang <subcommand> ...``."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import BangError

EXIT_RUNTIME = 1


def _seed(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("BANG_SEED")
    return int(env) if env else 0


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _task_spec(name, seq_len=None, motifs=None, separation=None):
    from .synthbench import TASK_PRESETS
    from .training.data import TaskSpec
    if name not in TASK_PRESETS:
        raise ValueError(f"unknown task {name!r}; choose from {', '.join(TASK_PRESETS)}")
    base = TASK_PRESETS[name]
    kw = {"task": base.task, "motifs": base.motifs, "seq_len": base.seq_len, "separation": base.separation}
    if seq_len:
        lo, _, hi = seq_len.partition(",")
        kw["seq_len"] = (int(lo), int(hi)) if hi else int(lo)
    if motifs:
        kw["motifs"] = tuple(m.strip().upper() for m in motifs.split(","))
    if separation is not None:
        kw["separation"] = None if separation == "random" else int(separation)
    return TaskSpec(**kw)


# --- subcommands -----------------------------------------------------------------

def cmd_gen_data(args):
    from .seqcore import SeqRecord, write_fasta
    from .training.data import synth_sample
    spec = _task_spec(args.task, args.seq_len, args.motifs, args.separation)
    rng = np.random.default_rng(_seed(args))
    recs = []
    for i in range(args.n):
        seq, after = synth_sample(spec, rng)
        recs.append(SeqRecord(f"{spec.task}_{i} anchor_after={after}", seq))
    _write(args.out, write_fasta(recs))
    return 0


def _model_config(args, kv):
    from .nn.model import PRESETS, ModelConfig
    cfg = PRESETS[args.preset].to_dict()
    cfg.update({k[len("model."):]: v for k, v in kv.items() if k.startswith("model.")})
    return ModelConfig.from_dict(cfg)


def _train_config(args, kv):
    from .training.loop import TrainConfig
    d = {k: v for k, v in kv.items() if not k.startswith(("model.", "task"))}
    flags = {"steps": args.steps, "batch": args.batch, "lr0": args.lr, "objective": args.objective,
             "optimizer": args.optimizer, "warmup_steps": args.warmup, "anchor_loss_weight": args.anchor_weight,
             "log_every": args.log_every}
    d.update({k: v for k, v in flags.items() if v is not None})
    if args.seed is not None or "seed" not in d:
        d["seed"] = _seed(args)
    return TrainConfig.from_dict(d)


def cmd_train(args):
    from .nn import checkpoint as ckio
    from .seqcore import read_fasta
    from .training.loop import read_kv, train
    kv = {}
    if args.config:
        with open(args.config) as fh:
            kv = read_kv(fh.read())
    mcfg = _model_config(args, kv)
    tcfg = _train_config(args, kv)
    if args.fasta:
        with open(args.fasta) as fh:
            data = read_fasta(fh.read())
    else:
        data = _task_spec(args.task or kv.get("task", "SingleBind"), args.seq_len or kv.get("task.seq_len"),
                          args.motifs or kv.get("task.motifs"))
    log = open(args.log, "w") if args.log else None
    try:
        ck = train(mcfg, tcfg, data, log=log)
    finally:
        if log:
            log.close()
    ckio.save(ck, args.out)
    print(f"wrote {args.out} ({ck.param_count()} params, final loss {ck.history[-1][2]:.4f})"
          if ck.history else f"wrote {args.out}")
    return 0


def cmd_generate(args):
    from .nn import checkpoint as ckio
    from .sampling import GenConfig, generate
    from .seqcore import SeqRecord, write_fasta
    seed = _seed(args)
    gcfg = GenConfig(top_k=args.top_k, max_len=args.max_len, seed=seed, fixed_len=args.fixed_len)
    model = protein = None
    if args.method != "random":
        if not args.checkpoint:
            raise ValueError(f"--checkpoint is required for method {args.method}")
        model = ckio.load(args.checkpoint).to_model()
    if args.protein_pdb:
        from .structio import parse_pdb_backbone, protein_input
        with open(args.protein_pdb) as fh:
            protein = protein_input(parse_pdb_backbone(fh.read(), args.protein_chain))
    seqs = generate(args.method, model, gcfg, args.n, protein=protein)
    recs = [SeqRecord(f"{args.method}_{i}", s) for i, s in enumerate(seqs)]
    _write(args.out, write_fasta(recs))
    return 0


def cmd_eval_synth(args):
    from .nn.model import PRESETS
    from .sampling import GenConfig
    from .synthbench import run_grid, TSV_COLUMNS, format_row
    from .training.loop import TrainConfig
    tasks = args.tasks.split(",")
    methods = args.methods.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]
    tcfg = TrainConfig(steps=args.steps)
    gcfg = GenConfig(top_k=args.top_k)
    rows = run_grid(tasks, methods, seeds, PRESETS[args.preset], tcfg, gcfg, n=args.n,
                    cache_dir=args.cache, jobs=args.jobs)
    lines = ["\t".join(TSV_COLUMNS)] + [format_row(r) for r in rows]
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_eval_metrics(args):
    from .seqcore import read_fasta
    from .seqmetrics import PWM, diversity, novelty, pwm_scan
    with open(args.fasta) as fh:
        seqs = [r.residues for r in read_fasta(fh.read())]
    out = [("n", str(len(seqs))),
           ("mean_length", f"{np.mean([len(s) for s in seqs]):.4f}"),
           ("diversity", f"{diversity(seqs, args.threshold):.6f}")]
    if args.reference:
        with open(args.reference) as fh:
            ref = [r.residues for r in read_fasta(fh.read())]
        out.append(("novelty_identity_approx", f"{novelty(seqs, ref, args.threshold):.6f}"))
    if args.pwm:
        with open(args.pwm) as fh:
            pwm = PWM.loads(fh.read())
        scores = [pwm_scan(s, pwm)["sigmoid_score"] for s in seqs if len(s) >= pwm.L]
        out.append(("pwm_mean_sigmoid", f"{np.mean(scores):.6f}" if scores else "nan"))
        out.append(("pwm_scanned", str(len(scores))))
    _write(args.out, "metric\tvalue\n" + "".join(f"{k}\t{v}\n" for k, v in out))
    return 0


def cmd_dump_mask(args):
    from .maskgen import anchors_of, mask_for_dims
    if args.m < 0 or args.n < -1:
        raise ValueError("--m must be >= 0 and --n >= -1")
    seq, mask = mask_for_dims(args.m, args.n + 1)
    _write(None, mask.render(anchors_of(seq)) + "\n")
    return 0


def cmd_frames(args):
    from .structio import frames_tsv, parse_pdb_backbone
    with open(args.pdb) as fh:
        chain = parse_pdb_backbone(fh.read(), args.chain)
    for w in chain.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _write(args.out, frames_tsv(chain))
    return 0


def cmd_info(args):
    from .nn import checkpoint as ckio
    ck = ckio.load(args.checkpoint)
    lines = [f"params\t{ck.param_count()}", f"params ≈ {ck.param_count() / 1000:.1f}k"]
    lines += [f"config.{k}\t{v}" for k, v in ck.config.to_dict().items()]
    lines += [f"meta.{k}\t{v}" for k, v in sorted(ck.meta.items())]
    _write(None, "\n".join(lines) + "\n")
    return 0


# --- parser ------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="bang", description="Bidirectional anchored generation toolkit.")
    sub = p.add_subparsers(dest="cmd", required=True)

    def seed_flag(sp):
        sp.add_argument("--seed", type=int, default=None, help="random seed (falls back to $BANG_SEED, then 0)")

    g = sub.add_parser("gen-data", help="write synthetic motif sequences as FASTA")
    g.add_argument("--task", default="SingleBind")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--seq-len", help="length L or range lo,hi")
    g.add_argument("--motifs", help="comma-separated motifs")
    g.add_argument("--separation", help="motif gap for mix tasks, or 'random'")
    g.add_argument("--out", default="-")
    seed_flag(g)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    t.add_argument("--preset", choices=("toy", "full"), default="toy")
    t.add_argument("--config", help="key = value file (TrainConfig keys, model.<field>, task)")
    t.add_argument("--task")
    t.add_argument("--seq-len")
    t.add_argument("--motifs")
    t.add_argument("--fasta", help="train on these sequences with random anchors instead of a synthetic task")
    t.add_argument("--objective", choices=("bang", "autoregressive", "iterative_mask", "iang"))
    t.add_argument("--optimizer", choices=("adam", "amsgrad"))
    t.add_argument("--steps", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--warmup", type=int)
    t.add_argument("--anchor-weight", type=float)
    t.add_argument("--log-every", type=int)
    t.add_argument("--log", help="loss TSV path")
    t.add_argument("--out", required=True)
    seed_flag(t)
    t.set_defaults(func=cmd_train)

    gen = sub.add_parser("generate", help="sample sequences from a checkpoint")
    gen.add_argument("--checkpoint")
    gen.add_argument("--method", default="bang",
                     choices=("bang", "ar", "iter-logit", "iter-entropy", "iang", "iang-logit", "iang-entropy", "random"))
    gen.add_argument("--n", type=int, default=10)
    gen.add_argument("--top-k", type=int, default=4)
    gen.add_argument("--max-len", type=int, default=50)
    gen.add_argument("--fixed-len", type=int, default=50)
    gen.add_argument("--protein-pdb")
    gen.add_argument("--protein-chain", default="A")
    gen.add_argument("--out", default="-")
    seed_flag(gen)
    gen.set_defaults(func=cmd_generate)

    ev = sub.add_parser("eval", help="synthetic benchmark or sequence metrics")
    evs = ev.add_subparsers(dest="what", required=True)
    es = evs.add_parser("synth", help="train/sample/score method x task cells")
    es.add_argument("--tasks", default="SingleBind,DoubleBind")
    es.add_argument("--methods", default="bang,ar,iter-logit,iter-entropy,iang-logit,iang-entropy,random")
    es.add_argument("--seeds", default="0")
    es.add_argument("--steps", type=int, default=80_000)
    es.add_argument("--preset", choices=("toy", "full"), default="toy")
    es.add_argument("--n", type=int, default=1000)
    es.add_argument("--top-k", type=int, default=4)
    es.add_argument("--cache", help="checkpoint cache directory (default $BANG_CACHE or ~/.cache/bang)")
    es.add_argument("--jobs", type=int, default=1)
    es.add_argument("--out", default="-")
    es.set_defaults(func=cmd_eval_synth)
    em = evs.add_parser("metrics", help="diversity, novelty and PWM scores of a FASTA file")
    em.add_argument("--fasta", required=True)
    em.add_argument("--pwm")
    em.add_argument("--reference")
    em.add_argument("--threshold", type=float, default=0.9)
    em.add_argument("--out", default="-")
    em.set_defaults(func=cmd_eval_metrics)

    dm = sub.add_parser("dump-mask", help="print the BAnG mask as an ASCII grid")
    dm.add_argument("--m", type=int, required=True, help="left tokens x_-1 .. x_-m")
    dm.add_argument("--n", type=int, required=True, help="right tokens x_0 .. x_n")
    dm.set_defaults(func=cmd_dump_mask)

    fr = sub.add_parser("frames", help="per-residue frames of a PDB chain as TSV")
    fr.add_argument("--pdb", required=True)
    fr.add_argument("--chain", default="A")
    fr.add_argument("--out", default="-")
    fr.set_defaults(func=cmd_frames)

    inf = sub.add_parser("info", help="print checkpoint configuration and parameter count")
    inf.add_argument("--checkpoint", required=True)
    inf.set_defaults(func=cmd_info)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BangError, ValueError, KeyError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"bang: error: {msg}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
