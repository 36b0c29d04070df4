"""Check a set of surrogate constants against the targets they were tuned for.

    python -m asrswitch.pipeline.calibrate --count 270 --offset 124 --slope 4.5

Simulates a grid corpus with the given constants, then reports the label
mix per (SIR, SNR) cell and the corpus CER of the two fixed inputs and of
the hard oracle.  The defaults in ``SurrogateConfig`` were picked so that
both labels occur at SIR = 10 dB and the hard oracle beats both fixed
inputs by at least 10 % relative.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from dataclasses import dataclass, replace

from .adapters import SurrogateASR, SurrogateSE
from .corpus import GridSpec, simulate_corpus
from .dataset import LabelReport, build_training_set
from .evaluation import EvalTable, evaluate, render_markdown
from .surrogate import DEFAULT_SURROGATE, SurrogateConfig, synthetic_noise_pool, \
    synthetic_speech_pool


@dataclass
class Calibration:
    report: LabelReport
    tables: dict[str, EvalTable]

    @property
    def oracle_gain(self) -> float:
        """Relative CER reduction of the hard oracle over the better fixed input."""
        fixed = min(self.tables["mixture"].average, self.tables["enhanced"].average)
        return 1.0 - self.tables["oracle-hard"].average / fixed

    @property
    def mid_sir_mixed(self) -> bool:
        return any(sir == 10.0 for sir, _ in self.report.mixed_cells())


def calibrate(cfg: SurrogateConfig = DEFAULT_SURROGATE, count: int = 270, seed: int = 0,
              workers: int = 1, out_dir=None) -> Calibration:
    speech = synthetic_speech_pool(40, 8, seed=seed)
    noise = synthetic_noise_pool(8, seed=seed + 1)
    with tempfile.TemporaryDirectory(prefix="calib_") as tmp:
        records = simulate_corpus(speech, noise, GridSpec(count=count), out_dir or tmp,
                                  seed=seed + 2, surrogate=cfg)
        se, asr = SurrogateSE(cfg), SurrogateASR(cfg, seed)
        data = build_training_set(records, se, asr, workers)
        tables = {p: evaluate(records, p, se, asr, workers=workers, with_accuracy=False).table
                  for p in ("mixture", "enhanced", "oracle-hard")}
    return Calibration(data.report, tables)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="calibrate", description=__doc__.split("\n\n")[0])
    p.add_argument("--count", type=int, default=270, help="utterances (spread over 9 cells)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--offset", type=float, default=DEFAULT_SURROGATE.sigmoid_offset)
    p.add_argument("--slope", type=float, default=DEFAULT_SURROGATE.sigmoid_slope)
    p.add_argument("--alpha-centre", type=float, default=DEFAULT_SURROGATE.alpha_log10_centre)
    p.add_argument("--alpha-spread", type=float, default=DEFAULT_SURROGATE.alpha_log10_spread)
    args = p.parse_args(argv)

    cfg = replace(DEFAULT_SURROGATE, sigmoid_offset=args.offset, sigmoid_slope=args.slope,
                  alpha_log10_centre=args.alpha_centre, alpha_log10_spread=args.alpha_spread)
    cal = calibrate(cfg, args.count, args.seed, args.workers)
    print(cal.report.to_markdown())
    print(render_markdown(list(cal.tables.values())))
    print(f"oracle-hard gain over best fixed input: {100 * cal.oracle_gain:.1f}%")
    print(f"both labels at SIR = 10 dB: {'yes' if cal.mid_sir_mixed else 'no'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
