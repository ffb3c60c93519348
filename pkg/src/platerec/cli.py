"""Command-line entry point: ``platerec {train,eval,predict,benchmark,synth}``."""

import argparse
import logging
import sys
from pathlib import Path

from . import errors
from .data import (
    PlateSample,
    SYMBOLS,
    alphabet_for,
    decode_label,
    load_labeled_dir,
    load_manifest,
    load_scene_dir,
    read_gray,
    split,
    symbol_histogram,
    synth_dataset,
    synth_scene,
    write_gray,
)
from .detection import ExternalBoxDetector, OracleDetector, read_annotations, write_annotations

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DATA_ERRORS = (
    errors.DatasetEmpty,
    errors.UnknownSymbol,
    errors.UnreadableImage,
    errors.TooFewSamples,
    errors.CorruptCheckpoint,
    errors.VersionMismatch,
    errors.IoFailure,
    errors.AlphabetMismatch,
    errors.MissingAnnotations,
    errors.LabelTooLong,
    errors.InfeasibleLabel,
    errors.ShapeMismatch,
    errors.NoGroundTruth,
)
NUMERIC_ERRORS = (errors.NonFiniteLoss, errors.NoValidPath, errors.DegenerateRow)

log = logging.getLogger("platerec")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _has_annotations(path):
    return any(p.suffix == ".txt" for p in Path(path).iterdir())


def load_dataset(path, alphabet=SYMBOLS):
    """Plates (label-in-filename or manifest) or annotated scenes."""
    path = Path(path)
    if not path.exists():
        raise errors.DatasetEmpty(f"{path} does not exist")
    if path.is_file():
        return load_manifest(path, alphabet)
    if _has_annotations(path):
        return load_scene_dir(path, alphabet)
    return load_labeled_dir(path, alphabet)


def select_split(path, which, seed=0):
    path = Path(path)
    if which != "all" and (path / which).is_dir():
        return load_dataset(path / which)
    samples = load_dataset(path)
    if which == "all":
        return samples
    train, val, test = split(samples, seed=seed)
    return {"train": train, "val": val, "test": test}[which]


def _check_alphabet(samples, model):
    if model.alphabet is None:
        return
    allowed = set(model.alphabet)
    for s in samples:
        text = decode_label(s.label, SYMBOLS)
        extra = set(text) - allowed
        if extra:
            raise errors.AlphabetMismatch(f"{s.source}: symbols {sorted(extra)} unknown to the model")
        s.label = [model.alphabet.index(c) for c in text]


def _detector(args, samples=None):
    if getattr(args, "dets", None):
        return ExternalBoxDetector(args.dets)
    if samples and all(s.boxes for s in samples):
        return OracleDetector(getattr(args, "jitter", 0.0), seed=0)
    return None


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------
def cmd_train(args):
    from .config import load_config
    from .train import train_from_config

    cfg = load_config(args.config)
    result = train_from_config(cfg)
    last = result.history[-1].line() if result.history else "no epochs run"
    print(f"wrote {cfg.out} (best epoch {result.best_epoch}); {last}")
    return EXIT_OK


def cmd_eval(args):
    from .model import load_checkpoint
    from .pipeline import evaluate

    model = load_checkpoint(args.ckpt)
    samples = select_split(args.data, args.split, args.seed)
    if not samples:
        raise errors.DatasetEmpty(f"split {args.split!r} of {args.data} is empty")
    _check_alphabet(samples, model)
    report = evaluate(
        model, samples, _detector(args, samples), beam=args.beam, score_threshold=args.score_threshold
    )
    sys.stdout.write(report.to_text(f"evaluation: {args.data} [{args.split}]"))
    kv = report.to_kv()
    if args.kv:
        Path(args.kv).write_text(kv, encoding="utf-8")
    else:
        sys.stdout.write(kv)
    return EXIT_OK


def format_reading(path, reading):
    b = reading.box
    box = f"{int(round(b.left))},{int(round(b.top))},{int(round(b.right))},{int(round(b.bottom))}"
    return f"{path}\t{box}\t{reading.padded}\t{reading.persian}\t{reading.status}"


def cmd_predict(args):
    from .model import load_checkpoint
    from .pipeline import WholeImageDetector, recognize_image

    model = load_checkpoint(args.ckpt)
    lines, failures = [], 0
    external = ExternalBoxDetector(args.dets) if args.dets else None
    for path in args.images:
        try:
            image = read_gray(path)[..., None]
            ann = Path(path).with_suffix(".txt")
            boxes = read_annotations(ann, image.shape[1], image.shape[0]) if ann.exists() else []
            sample = PlateSample(image, [], str(path), boxes)
            detector = external or (OracleDetector(args.jitter) if boxes else WholeImageDetector())
            readings = recognize_image(model, detector, sample, beam=args.beam, margin=args.margin)
            lines.extend(format_reading(path, r) for r in readings)
        except (errors.PlateRecError, ValueError) as exc:
            failures += 1
            print(f"{path}: {exc}", file=sys.stderr)
    text = "".join(line + "\n" for line in lines)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.images and failures == len(args.images):
        return EXIT_DATA
    return EXIT_OK


def cmd_benchmark(args):
    from .model import load_checkpoint
    from .pipeline import benchmark

    model = load_checkpoint(args.ckpt)
    samples = load_dataset(args.data)
    report = benchmark(model, samples, _detector(args, samples), beam=args.beam)
    sys.stdout.write(report.to_text(f"benchmark: {args.data}"))
    sys.stdout.write(report.to_kv())
    return EXIT_OK


def unique_name(directory, stem, suffix, taken):
    name = f"{stem}{suffix}"
    k = 1
    while name in taken:
        name = f"{stem}_{k}{suffix}"
        k += 1
    taken.add(name)
    return Path(directory) / name


def cmd_synth(args):
    alphabet = alphabet_for(args.alphabet)
    if not 1 <= args.minlen <= args.maxlen <= 8:
        raise errors.ConfigInvalid("need 1 <= minlen <= maxlen <= 8")
    lengths = {n: 1.0 for n in range(args.minlen, args.maxlen + 1)}
    samples = synth_dataset(args.n, alphabet, lengths, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    taken = set()
    for i, s in enumerate(samples):
        stem = decode_label(s.label, alphabet)
        if args.scenes:
            scene = synth_scene([s], seed=args.seed * 1_000_003 + i)
            path = unique_name(out, stem, ".png", taken)
            write_gray(path, scene.image)
            write_annotations(path.with_suffix(".txt"), scene.boxes, scene.image.shape[1], scene.image.shape[0])
        else:
            write_gray(unique_name(out, stem, ".png", taken), s.image)
    hist = symbol_histogram(samples, alphabet)
    (out / "histogram.tsv").write_text("".join(f"{k}\t{v}\n" for k, v in hist.items()), encoding="utf-8")
    print(f"wrote {len(samples)} {'scenes' if args.scenes else 'plates'} to {out}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="platerec", description="License-plate sequence recognition (CRNN + CTC).")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a recognizer from a config file")
    t.add_argument("--config", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy (and detection) report on a dataset split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    e.add_argument("--seed", type=int, default=0, help="split seed (must match training)")
    e.add_argument("--beam", type=int, default=0)
    e.add_argument("--score-threshold", type=float, default=0.0)
    e.add_argument("--dets", help="directory of precomputed detection files")
    e.add_argument("--jitter", type=float, default=0.0, help="oracle detector box jitter")
    e.add_argument("--kv", help="write the key=value report here instead of stdout")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="read plates in images")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--beam", type=int, default=0)
    r.add_argument("--margin", type=int, default=0)
    r.add_argument("--out")
    r.add_argument("--dets", help="directory of precomputed detection files")
    r.add_argument("--jitter", type=float, default=0.0)
    r.add_argument("images", nargs="+")
    r.set_defaults(func=cmd_predict)

    b = sub.add_parser("benchmark", help="per-stage timing report")
    b.add_argument("--ckpt", required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--beam", type=int, default=0)
    b.add_argument("--dets")
    b.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("synth", help="write a synthetic plate dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--alphabet", choices=["digits", "full"], default="full")
    s.add_argument("--maxlen", type=int, default=8)
    s.add_argument("--minlen", type=int, default=None)
    s.add_argument("--scenes", action="store_true", help="paste plates into larger annotated scenes")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "minlen", 1) is None:
        args.minlen = args.maxlen
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except errors.ConfigInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
