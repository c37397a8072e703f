"""Command-line surface.

Every command takes ``--config`` (TOML), ``--seed`` and ``--out``; flags
override file values, and the effective configuration is echoed to
standard error before any work starts.  Errors exit non-zero with a
single JSON line on standard error.
"""

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ImportError:                    # Python 3.10
    import tomli as tomllib

import numpy as np

from . import archive, data, detector, dsp, evaluate, train, zoo

CONFIG_SECTIONS = {
    "train": {"target", "arch", "lr0", "batch_size", "min_epochs", "max_epochs",
              "plateau_factor", "plateau_patience", "lr_stop_ratio",
              "dev_fraction", "seed", "resize_frames", "window_frames",
              "step_fraction", "step_mode", "n_bands", "max_slices_per_utt"},
    "augment": {"time_mask_max", "freq_mask_max", "active_epochs", "seed"},
    "detect": {"gamma", "gamma_floor", "resize_frames"},
    "features": {"n_bands"},
}


def load_config(path):
    with open(path, "rb") as f:
        cfg = tomllib.load(f)
    for section, table in cfg.items():
        if section not in CONFIG_SECTIONS:
            raise ValueError(f"{path}: unknown config section [{section}]")
        unknown = set(table) - CONFIG_SECTIONS[section]
        if unknown:
            raise ValueError(
                f"{path}: unknown key(s) {sorted(unknown)} in [{section}]")
    return cfg


def _echo(command, effective):
    sys.stderr.write(json.dumps({"command": command, "config": effective}) + "\n")


def _section(cfg, name):
    return dict(cfg.get(name, {}))


def _build_train_config(args, cfg):
    fields = _section(cfg, "train")
    aug = _section(cfg, "augment")
    for key in ("target", "arch", "batch_size", "min_epochs", "max_epochs",
                "n_bands", "window_frames", "step_fraction", "seed"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            fields[key] = value
    if aug:
        fields["augment"] = train.AugmentPolicy(**aug)
    return train.TrainConfig(**fields)


def cmd_gen_data(args, cfg):
    out = Path(args.out)
    seed = 0 if args.seed is None else args.seed
    entries = data.generate_toy_corpus(out, args.n_pos, args.n_neg, seed)
    made = {"manifest": str(out / "manifest.jsonl"), "utterances": len(entries)}
    if args.background_s > 0:
        bg = data.generate_negative_audio(out / "background", args.background_s,
                                          seed + 1)
        made["background_manifest"] = str(out / "background" / "manifest.jsonl")
        made["background_chunks"] = len(bg)
    print(json.dumps(made))
    return 0


def cmd_featurize(args, cfg):
    n_bands = _section(cfg, "features").get("n_bands", dsp.DEFAULT_BANDS)
    if args.n_bands is not None:
        n_bands = args.n_bands
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = data.load_manifest(args.manifest)
    with open(out / "features.jsonl", "w", encoding="utf-8") as index:
        for e in entries:
            pcm, rate = dsp.read_wav(e.path)
            spec = dsp.stft_logmel(pcm, rate, n_bands)
            name = Path(e.path).stem + ".npy"
            np.save(out / name, spec.values)
            index.write(json.dumps({"path": name, "label": e.label,
                                    "bands": spec.bands,
                                    "frames": spec.frames}) + "\n")
    print(json.dumps({"features": str(out / "features.jsonl"),
                      "count": len(entries)}))
    return 0


def cmd_train(args, cfg):
    tc = _build_train_config(args, cfg)
    _echo("train", {"train": tc.__dict__ | {"augment": tc.augment.__dict__}})
    model, history = train.train(args.manifest, tc, log_path=args.log)
    archive.save_weights(model, args.out)
    print(json.dumps({"model": args.out, "epochs": len(history),
                      "best_dev_loss": min(h["dev_loss"] for h in history)}))
    return 0


def cmd_params(args, cfg):
    model = zoo.build_model(args.arch, seed=0 if args.seed is None else args.seed)
    print(zoo.summary(model))
    return 0


def _load_models(args, cfg):
    detect_cfg = _section(cfg, "detect")
    n_bands = _section(cfg, "features").get("n_bands", dsp.DEFAULT_BANDS)
    if args.n_bands is not None:
        n_bands = args.n_bands
    gamma = args.gamma if args.gamma is not None else detect_cfg.get("gamma", 0.5)
    resize = detect_cfg.get("resize_frames", 200)
    m0 = archive.load_weights(args.m0, args.arch)
    m1 = archive.load_weights(args.m1, args.arch)
    slice_cfg = dsp.SliceConfig(args.window_frames or 100,
                                args.step_fraction or 0.3)
    return m0, m1, gamma, resize, n_bands, slice_cfg


def cmd_detect(args, cfg):
    m0, m1, gamma, resize, n_bands, slice_cfg = _load_models(args, cfg)
    _echo("detect", {"gamma": gamma, "n_bands": n_bands,
                     "window_frames": slice_cfg.window_frames,
                     "step": slice_cfg.step})
    events = detector.score_stream(args.stream, m0, m1, gamma, slice_cfg,
                                   n_bands, resize)
    records = [e.to_record(dsp.HOP / dsp.SAMPLE_RATE) for e in events]
    text = "\n".join(json.dumps(r) for r in records)
    if args.out:
        Path(args.out).write_text(text + ("\n" if text else ""), encoding="utf-8")
    elif text:
        print(text)
    sys.stderr.write(f"{len(events)} event(s)\n")
    return 0


def _parse_thresholds(spec_str):
    try:
        a, b, n = spec_str.split(":")
        grid = np.linspace(float(a), float(b), int(n))
    except ValueError:
        raise ValueError(f"thresholds must be a:b:n, got {spec_str!r}") from None
    return [float(t) for t in grid]


def _run_sweep(args, cfg, thresholds):
    m0, m1, gamma, resize, n_bands, slice_cfg = _load_models(args, cfg)
    floor = args.gamma_floor if args.gamma_floor is not None else \
        _section(cfg, "detect").get("gamma_floor", 0.1)
    _echo("eval", {"gamma_floor": floor, "n_bands": n_bands,
                   "thresholds": [thresholds[0], thresholds[-1], len(thresholds)]})
    entries = data.load_manifest(args.manifest)
    if args.background:
        entries = entries + data.load_manifest(args.background)
    events, labels, durations = evaluate.collect_events(
        m0, m1, entries, floor, slice_cfg, n_bands, resize)
    points = evaluate.evaluate(events, labels, durations, thresholds)
    if args.out:
        evaluate.det_to_csv(points, args.out)
    print(json.dumps({"frr_at_fah_0.5": evaluate.frr_at_fah(points),
                      "points": len(points),
                      "csv": args.out}))
    return 0


def cmd_eval(args, cfg):
    return _run_sweep(args, cfg, _parse_thresholds(args.thresholds))


def _common(sub):
    sub.add_argument("--config", help="TOML configuration file")
    sub.add_argument("--seed", type=int, default=None,
                     help="seed (default 0, unless the config file sets one)")
    sub.add_argument("--out", help="output path")


def _model_flags(sub):
    sub.add_argument("--m0", required=True, help="M0 weight archive")
    sub.add_argument("--m1", required=True, help="M1 weight archive")
    sub.add_argument("--arch", default="se-res2net50-ii")
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--n-bands", type=int, dest="n_bands")
    sub.add_argument("--window-frames", type=int, dest="window_frames")
    sub.add_argument("--step-fraction", type=float, dest="step_fraction")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wwdet", description="wake-word detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic corpus")
    _common(p)
    p.add_argument("--n-pos", type=int, default=200)
    p.add_argument("--n-neg", type=int, default=200)
    p.add_argument("--background-s", type=float, default=0.0,
                   help="extra negative background audio, in seconds")
    p.set_defaults(fn=cmd_gen_data, require_out=True)

    p = sub.add_parser("featurize", help="precompute log-mel features")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-bands", type=int, dest="n_bands")
    p.set_defaults(fn=cmd_featurize, require_out=True)

    p = sub.add_parser("train", help="train a classifier")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--target", choices=("m0", "m1"))
    p.add_argument("--arch")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--min-epochs", type=int, dest="min_epochs")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--n-bands", type=int, dest="n_bands")
    p.add_argument("--window-frames", type=int, dest="window_frames")
    p.add_argument("--step-fraction", type=float, dest="step_fraction")
    p.add_argument("--log", help="JSONL training log path")
    p.set_defaults(fn=cmd_train, require_out=True)

    p = sub.add_parser("params", help="architecture summary and parameter count")
    _common(p)
    p.add_argument("--arch", required=True)
    p.set_defaults(fn=cmd_params)

    p = sub.add_parser("detect", help="stream detection over one WAV")
    _common(p)
    p.add_argument("--stream", required=True, help="input WAV")
    _model_flags(p)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("eval", help="DET sweep over a labeled manifest")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--background",
                   help="additional negative-audio manifest to sweep over")
    _model_flags(p)
    p.add_argument("--gamma-floor", type=float, dest="gamma_floor")
    p.add_argument("--thresholds", default="0.05:0.95:19")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="DET sweep with an explicit threshold grid")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--background",
                   help="additional negative-audio manifest to sweep over")
    _model_flags(p)
    p.add_argument("--gamma-floor", type=float, dest="gamma_floor")
    p.add_argument("--thresholds", required=True, help="a:b:n grid")
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "require_out", False) and not args.out:
            raise ValueError(f"{args.command} requires --out")
        cfg = load_config(args.config) if args.config else {}
        return args.fn(args, cfg)
    except Exception as e:  # single machine-parsable line on stderr
        sys.stderr.write(json.dumps(
            {"error": type(e).__name__, "message": str(e)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
