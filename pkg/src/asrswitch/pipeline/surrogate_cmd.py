"""Command-line wrappers so the surrogates can be driven through adapter templates.

    python -m asrswitch.pipeline.surrogate_cmd se --input {input} --enroll {enroll} \
        --output {output} --manifest {manifest} --utt {utt_id}
    python -m asrswitch.pipeline.surrogate_cmd asr --input {input} --output {output} \
        --manifest {manifest} --utt {utt_id}
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import InvalidInputError
from ..wavio import read_wav, write_wav
from .corpus import read_manifest
from .surrogate import surrogate_asr, surrogate_se

SE_TEMPLATE = (f"{sys.executable} -m asrswitch.pipeline.surrogate_cmd se --input {{input}} "
               "--enroll {enroll} --output {output} --manifest {manifest} --utt {utt_id}")
ASR_TEMPLATE = (f"{sys.executable} -m asrswitch.pipeline.surrogate_cmd asr --input {{input}} "
                "--output {output} --manifest {manifest} --utt {utt_id}")


def _record(manifest, utt):
    for r in read_manifest(manifest):
        if r.utt_id == utt:
            return r
    raise InvalidInputError(f"{utt} not found in {manifest}")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="surrogate_cmd")
    p.add_argument("mode", choices=["se", "asr"])
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--utt", required=True)
    p.add_argument("--enroll", default="")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rec = _record(args.manifest, args.utt)
    try:
        bundle = rec.bundle()
    except FileNotFoundError as exc:
        raise InvalidInputError(f"{args.utt}: missing component file {exc.filename}") from exc
    if args.mode == "se":
        if rec.artifact_strength is None:
            raise InvalidInputError(f"{args.utt}: no artifact_strength in manifest")
        extract = "target"
        if rec.has("enrollment_interferer") and args.enroll and \
                Path(args.enroll).resolve() == rec.path("enrollment_interferer").resolve():
            extract = "interference"
        write_wav(args.output, surrogate_se(bundle, float(rec.artifact_strength),
                                            extract=extract))
    else:
        x = read_wav(args.input)
        text = surrogate_asr(x, bundle.target, bundle.interference, bundle.noise,
                             rec.transcript, rec.utt_id, args.seed)
        Path(args.output).write_text(text, encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
