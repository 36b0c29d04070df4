"""Command-line entry point: ``asrswitch <command> [options]``.

Commands
  simulate   mix a speech/noise pool at controlled SIR/SNR, write WAVs + manifest
  enhance    run the SE adapter and add enhanced paths to the manifest
  recognize  run the ASR adapter on mixture and enhanced signals
  label      label which signal recognised better; per-(SIR, SNR) report
  train      train the switch classifier from train/dev manifests
  evaluate   CER tables for one or more switching policies
  report     render TSV tables (evaluation or label reports) as markdown
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import SwitchError
from .metrics import write_labels
from .model import Architecture, load_checkpoint, save_checkpoint
from .pipeline.adapters import make_asr, make_se
from .pipeline.corpus import GridSpec, RangeSpec, load_noise_dir, load_speech_list, \
    read_manifest, simulate_corpus, write_manifest
from .pipeline.dataset import build_training_set, ordered_map, \
    recognize_pair, write_hypotheses
from .pipeline.evaluation import EvalTable, evaluate, render_markdown
from .pipeline.surrogate import synthetic_noise_pool, synthetic_speech_pool
from .rule import RuleConfig
from .training import TrainConfig, train, write_train_log
from .wavio import write_wav

log = logging.getLogger("asrswitch")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--manifest", type=Path, help="manifest (JSON lines)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1, help="utterance-level worker threads")
    g.add_argument("--se-cmd", default=None,
                   help='SE command template, or "surrogate"')
    g.add_argument("--asr-cmd", default=None,
                   help='ASR command template, or "surrogate"')
    g.add_argument("--cache-dir", type=Path, default=None, help="adapter output cache")
    g.add_argument("--checkpoint", type=Path, default=None)
    g.add_argument("--policy", action="append", default=None,
                   help="policy to evaluate (repeatable)")
    g.add_argument("--lambda-db", type=float, default=10.0, help="rule threshold on SIR-SNR")
    g.add_argument("--soft-weight", type=float, default=None,
                   help="mixture weight for the fixed-soft policy")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="asrswitch", description=__doc__.split("\n\n")[0],
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a mixture corpus")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--speech-list", type=Path,
                   help="TSV of wav<TAB>speaker<TAB>transcript (default: synthetic pool)")
    p.add_argument("--noise-dir", type=Path, help="directory of noise WAVs (default: synthetic)")
    p.add_argument("--grid-sir", type=_floats, default=(0.0, 10.0, 20.0))
    p.add_argument("--grid-snr", type=_floats, default=(0.0, 10.0, 20.0))
    p.add_argument("--range", nargs=2, type=float, metavar=("LOW", "HIGH"),
                   help="sample SIR and SNR uniformly instead of the grid")
    p.add_argument("--count", type=int, default=81)
    p.add_argument("--prefix", default="utt")
    p.add_argument("--overlap-ratio", type=float, default=1.0)
    p.add_argument("--pool-speakers", type=int, default=40)
    p.add_argument("--pool-utts", type=int, default=8)
    p.add_argument("--pool-seed", type=int, default=0)

    p = sub.add_parser("enhance", parents=[common], help="run speech extraction")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--output-manifest", type=Path, required=True)
    p.add_argument("--interferer", action="store_true",
                   help="also extract the interferer (needed by the rule policy)")

    p = sub.add_parser("recognize", parents=[common], help="recognise mixture and enhanced")
    p.add_argument("--output", type=Path, required=True, help="hypotheses TSV")

    p = sub.add_parser("label", parents=[common], help="label utterances")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("train", parents=[common], help="train the switch classifier")
    p.add_argument("--dev-manifest", type=Path, required=True)
    p.add_argument("--log", type=Path, default=None, help="per-epoch TSV log")
    p.add_argument("--epochs", type=int, default=TrainConfig.max_epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.initial_lr)
    p.add_argument("--normalize", action="store_true", help="standardise features")
    p.add_argument("--hidden", type=int, default=Architecture.hidden)
    p.add_argument("--layers", type=int, default=Architecture.num_layers)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate switching policies")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("report", parents=[common], help="render TSV tables as markdown")
    p.add_argument("tables", nargs="+", type=Path)
    return parser


def _need_manifest(args):
    if args.manifest is None:
        raise SystemExit("error: --manifest is required for this command")
    return read_manifest(args.manifest)


def _adapters(args):
    se = make_se(args.se_cmd, args.cache_dir, args.manifest)
    asr = make_asr(args.asr_cmd, args.cache_dir, args.manifest, seed=args.seed)
    return se, asr


def cmd_simulate(args) -> int:
    if args.speech_list:
        speech = load_speech_list(args.speech_list)
    else:
        speech = synthetic_speech_pool(args.pool_speakers, args.pool_utts, seed=args.pool_seed)
    noise = load_noise_dir(args.noise_dir) if args.noise_dir else \
        synthetic_noise_pool(seed=args.pool_seed)
    if args.range:
        spec = RangeSpec(args.range[0], args.range[1], args.count)
    else:
        spec = GridSpec(args.grid_sir, args.grid_snr, args.count)
    name = args.manifest.name if args.manifest else "manifest.jsonl"
    records = simulate_corpus(speech, noise, spec, args.out_dir, seed=args.seed,
                              prefix=args.prefix, overlap_ratio=args.overlap_ratio,
                              manifest_name=name)
    print(f"wrote {len(records)} records to {args.out_dir / name}")
    return 0


def cmd_enhance(args) -> int:
    records = _need_manifest(args)
    se, _ = _adapters(args)
    if se is None:
        raise SystemExit("error: --se-cmd is required")
    out_root = args.output_manifest.parent
    speakers = ("target", "interferer") if args.interferer else ("target",)

    def work(record):
        for spk in speakers:
            key = "enhanced" if spk == "target" else "enhanced_interferer"
            if spk == "interferer" and not record.has("enrollment_interferer"):
                continue
            path = args.out_dir / f"{record.utt_id}_{key}.wav"
            write_wav(path, se.enhance(record, spk))
            record = record.with_path(key, path)
        return record

    updated = ordered_map(work, records, args.workers)
    # Paths are rewritten relative to the new manifest's directory.
    rebased = []
    for r in updated:
        paths = {}
        for k, v in r.paths.items():
            full = (r.root / v).resolve()
            try:
                paths[k] = full.relative_to(out_root.resolve()).as_posix()
            except ValueError:
                paths[k] = full.as_posix()
        rebased.append(replace(r, paths=paths, root=out_root))
    write_manifest(args.output_manifest, rebased)
    print(f"enhanced {len(rebased)} utterances -> {args.output_manifest}")
    return 0


def cmd_recognize(args) -> int:
    records = _need_manifest(args)
    se, asr = _adapters(args)
    if asr is None:
        raise SystemExit("error: --asr-cmd is required")
    hyps = ordered_map(lambda r: recognize_pair(r, se, asr)[0], records, args.workers)
    write_hypotheses(args.output, hyps)
    print(f"wrote {len(hyps)} hypothesis pairs to {args.output}")
    return 0


def cmd_label(args) -> int:
    records = _need_manifest(args)
    se, asr = _adapters(args)
    if asr is None:
        raise SystemExit("error: --asr-cmd is required")
    data = build_training_set(records, se, asr, args.workers)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_labels(args.out_dir / "labels.tsv", data.all_labels)
    (args.out_dir / "label_report.tsv").write_text(data.report.to_tsv(), encoding="utf-8")
    print(data.report.to_markdown(), end="")
    print(f"{len(data)} usable / {len(data.all_labels)} labelled; "
          f"{len(data.failures)} adapter failures")
    return 0


def cmd_train(args) -> int:
    records = _need_manifest(args)
    dev_records = read_manifest(args.dev_manifest)
    if args.checkpoint is None:
        raise SystemExit("error: --checkpoint is required")
    se, asr = _adapters(args)
    if asr is None:
        raise SystemExit("error: --asr-cmd is required")
    tr = build_training_set(records, se, asr, args.workers)
    dev = build_training_set(dev_records, se, asr, args.workers)
    cfg = TrainConfig(initial_lr=args.lr, max_epochs=args.epochs, batch_size=args.batch_size,
                      seed=args.seed, normalize_features=args.normalize)
    arch = Architecture(hidden=args.hidden, num_layers=args.layers)
    result = train(tr.as_pair(), dev.as_pair(), cfg, arch,
                   progress=lambda st: print(st.tsv(), flush=True))
    save_checkpoint(result.model, args.checkpoint)
    if args.log:
        write_train_log(args.log, result.log)
    best = result.best
    print(f"best epoch {best.epoch}: dev loss {best.dev_loss:.4f}, dev acc {best.dev_acc:.3f}")
    return 0


def cmd_evaluate(args) -> int:
    records = _need_manifest(args)
    se, asr = _adapters(args)
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    rule_cfg = RuleConfig(lambda_db=args.lambda_db)
    policies = args.policy or ["mixture", "enhanced", "oracle-hard"]
    args.out_dir.mkdir(parents=True, exist_ok=True)
    tables = []
    for policy in policies:
        res = evaluate(records, policy, se, asr, model, rule_cfg, args.soft_weight, args.workers)
        tables.append(res.table)
        (args.out_dir / f"{res.table.policy}.tsv").write_text(res.table.to_tsv(),
                                                               encoding="utf-8")
        extra = f"  accuracy {res.accuracy:.3f}" if res.accuracy is not None else ""
        if res.excluded:
            extra += f"  ({len(res.excluded)} excluded: no interferer enrollment)"
        print(f"{res.table.policy}: CER {100 * res.table.average:.2f}%{extra}")
    md = render_markdown(tables)
    (args.out_dir / "table.md").write_text(md, encoding="utf-8")
    print(md, end="")
    return 0


def cmd_report(args) -> int:
    from .pipeline.dataset import LabelCell, LabelReport
    tables = []
    for path in args.tables:
        text = path.read_text(encoding="utf-8")
        if text.startswith("sir_db\tsnr_db\tn\t"):
            rep = LabelReport()
            for line in text.splitlines()[1:]:
                sir, snr, _, mix, enh, tie = line.split("\t")
                rep.cells[(float(sir), float(snr))] = LabelCell(int(mix), int(enh), int(tie))
            print(rep.to_markdown())
        else:
            tables.append(EvalTable.from_tsv(text, path.stem))
    if tables:
        print(render_markdown(tables), end="")
    return 0


COMMANDS = {
    "simulate": cmd_simulate, "enhance": cmd_enhance, "recognize": cmd_recognize,
    "label": cmd_label, "train": cmd_train, "evaluate": cmd_evaluate, "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SwitchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
