"""``multitalk`` command line tool.

Exit codes: 0 success, 1 invalid input, 2 I/O failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Meeting, load_manifest, manifest_lines, subsegment_meeting, tokenize
from .heat import assign, build_references
from .lattice import (
    ctc_loss,
    gather_window,
    mask_loss,
    max_relative_error,
    numerical_gradient,
    occupancy,
    prune_bounds,
    pruned_rnnt_loss,
    rnnt_loss,
    trivial_join,
)
from .metrics import EditStats, cp_wer, edit_stats, ngram_diagnostics, orc_wer
from .mixer import GenerationConfig, PauseStats, fit_stats, generate_mixtures, load_mixtures

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_USAGE = 0, 1, 2, 64
JOBS_ENV = "MULTITALK_JOBS"

log = logging.getLogger("multitalk")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def provenance(inputs, seed=None) -> dict:
    return {
        "tool": "multitalk",
        "version": __version__,
        "seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs},
    }


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonl(header: dict, records) -> str:
    lines = [json.dumps({"_provenance": header}, sort_keys=True)]
    lines += [r if isinstance(r, str) else json.dumps(r, ensure_ascii=False) for r in records]
    return "".join(line + "\n" for line in lines)


def _check_inputs(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _check_output(path):
    parent = Path(path).parent
    if not parent.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {parent}")


def _jobs(args) -> int:
    return max(1, args.jobs or int(os.environ.get(JOBS_ENV, "1")))


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# subcommands ---------------------------------------------------------------


def cmd_subsegment(args):
    _check_inputs(args.manifest)
    _check_output(args.out)
    meetings = [subsegment_meeting(m, args.tau) for m in load_manifest(args.manifest)]
    atomic_write(args.out, _jsonl(provenance([args.manifest], args.seed), manifest_lines(meetings)))


def cmd_fit_stats(args):
    _check_inputs(args.meetings)
    _check_output(args.out)
    stats = fit_stats(load_manifest(args.meetings), args.bin_width)
    out = {"provenance": provenance([args.meetings], args.seed), **stats.to_dict()}
    atomic_write(args.out, json.dumps(out, indent=2) + "\n")


def _parse_loudness(text):
    if text is None:
        return None
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"--loudness expects MIN:MAX, got {text!r}")
    lo, hi = float(lo), float(hi)
    return (min(lo, hi), max(lo, hi))


def _render_one(job):
    from .audio import render_audio, write_wav

    spec, config, audio_dir = job
    out = render_audio(spec, config)
    mix_path = Path(audio_dir) / f"{spec.id}.wav"
    src_path = Path(audio_dir) / f"{spec.id}.sources.wav"
    write_wav(mix_path, out.audio, out.sample_rate)
    write_wav(src_path, out.sources.T, out.sample_rate)
    return str(mix_path), str(src_path), out.gain


def cmd_simulate(args):
    if args.seed is None:
        raise UsageError("simulate requires an explicit --seed")
    _check_inputs(args.segments, args.stats)
    _check_output(args.out)
    for d in (args.rir_dir, args.noise_dir):
        if d is not None and not Path(d).is_dir():
            raise FileNotFoundError(f"directory not found: {d}")
    config = GenerationConfig(
        max_speakers=args.max_speakers,
        max_speaker_dur=args.max_speaker_dur,
        num_channels=args.channels,
        rir_dir=args.rir_dir,
        noise_dir=args.noise_dir,
        noise_snr_db=args.noise_snr,
        loudness_db=_parse_loudness(args.loudness),
        seed=args.seed,
    )
    segments = [s for m in load_manifest(args.segments) for s in m.segments]
    stats_raw = json.loads(Path(args.stats).read_text(encoding="utf-8"))
    stats = PauseStats.from_dict(stats_raw)
    mixtures = generate_mixtures(segments, stats, config)
    records = [m.to_dict() for m in mixtures]

    if args.audio:
        audio_dir = Path(args.audio_dir or Path(args.out).with_suffix("").as_posix() + "_audio")
        audio_dir.mkdir(parents=True, exist_ok=True)
        rendered = _map(_render_one, [(m, config, audio_dir) for m in mixtures], _jobs(args))
        for rec, (mix_path, src_path, gain) in zip(records, rendered):
            rec["audio"] = {"mixture": mix_path, "sources": src_path, "gain": gain}

    log.info("generated %d mixtures from %d segments", len(mixtures), len(segments))
    atomic_write(args.out, _jsonl(provenance([args.segments, args.stats], args.seed), records))


def cmd_heat(args):
    _check_inputs(args.mixtures)
    _check_output(args.out)
    records = []
    for spec in load_mixtures(args.mixtures):
        utts = spec.utterances()
        a = assign(utts, args.channels)
        refs = build_references(utts, a)
        records.append(
            {
                "id": spec.id,
                "channels": [list(ch) for ch in refs.per_channel],
                "assignment": list(a.channel_of),
                "conflicts": list(a.conflicts),
                "boundaries": [[list(b) for b in ch] for ch in refs.boundaries],
            }
        )
    atomic_write(args.out, _jsonl(provenance([args.mixtures], args.seed), records))


def _read_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if "_provenance" not in obj:
                out.append(obj)
    return out


def _reference_utterances(obj) -> list[tuple[str, list[str]]]:
    """(speaker, tokens) per reference utterance in start-time order."""
    if "segments" in obj:
        meeting = Meeting.from_dict(obj)
        return [(s.speaker, tokenize(s.text)) for s in meeting.segments]
    if "channels" in obj:
        utts = []
        for c, tokens in enumerate(obj["channels"]):
            bounds = obj.get("boundaries")
            if bounds is None:
                utts.append((0, f"channel{c}", list(tokens)))
                continue
            starts = [b[1] for b in bounds[c]] + [len(tokens)]
            for (n, _), a, b in zip(bounds[c], starts, starts[1:]):
                utts.append((n, f"channel{c}", list(tokens[a:b])))
        utts.sort(key=lambda u: u[0])
        return [(spk, toks) for _, spk, toks in utts]
    raise ValueError(f"reference {obj.get('id')!r} has neither 'segments' nor 'channels'")


def _score_one(job):
    metric, ngram, sid, utts, hyps = job
    refs = [toks for _, toks in utts]
    result = {"id": sid}
    if metric == "orc":
        orc = orc_wer(refs, hyps)
        stats, result["assignment"] = orc.stats, list(orc.assignment)
    elif metric == "cpwer":
        by_spk: dict[str, list[str]] = {}
        for spk, toks in utts:
            by_spk.setdefault(spk, []).extend(toks)
        stats = cp_wer(by_spk, hyps) if by_spk else edit_stats([], [t for h in hyps for t in h])
    else:
        stats = edit_stats([t for r in refs for t in r], [t for h in hyps for t in h])
    result.update(stats.to_dict())
    if ngram:
        diag = ngram_diagnostics(refs, hyps, ngram)
        result[f"leakage@{ngram}"] = diag.leakage
        result[f"omission@{ngram}"] = diag.omission
        result[f"unique_{ngram}grams"] = diag.total_unique
    return result, stats


def cmd_score(args):
    _check_inputs(args.refs, args.hyps)
    _check_output(args.out)
    refs = _read_jsonl(args.refs)
    hyps = {h["id"]: h["channels"] for h in _read_jsonl(args.hyps)}
    jobs = []
    for obj in refs:
        sid = str(obj["id"])
        if sid not in hyps:
            raise ValueError(f"no hypothesis for session {sid!r}")
        jobs.append((args.metric, args.ngram, sid, _reference_utterances(obj), [list(h) for h in hyps[sid]]))
    scored = _map(_score_one, jobs, _jobs(args))

    total = EditStats()
    for _, stats in scored:
        total = total + stats
    aggregate = total.to_dict()
    if args.ngram:
        key_l, key_o = f"leakage@{args.ngram}", f"omission@{args.ngram}"
        weights = [r[f"unique_{args.ngram}grams"] for r, _ in scored]
        denom = sum(weights)
        aggregate[key_l] = sum(w * r[key_l] for w, (r, _) in zip(weights, scored)) / denom if denom else 0.0
        aggregate[key_o] = sum(w * r[key_o] for w, (r, _) in zip(weights, scored)) / denom if denom else 0.0
    report = {
        "provenance": provenance([args.refs, args.hyps], args.seed),
        "metric": args.metric,
        "sessions": [r for r, _ in scored],
        "aggregate": aggregate,
    }
    atomic_write(args.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    log.info("%s over %d sessions: %s", args.metric, len(scored), aggregate.get("wer"))


def _as_array(obj, key, shape=None):
    arr = np.asarray(obj[key], dtype=np.float64)
    return arr.reshape(shape) if shape is not None else arr


def cmd_loss(args):
    _check_inputs(args.input)
    if args.out:
        _check_output(args.out)
    obj = json.loads(Path(args.input).read_text(encoding="utf-8"))
    blank = int(obj.get("blank", 0))
    labels = [int(v) for v in obj.get("labels", [])]
    out = {"provenance": provenance([args.input], args.seed), "mode": args.mode}
    grid = None

    if args.mode == "rnnt":
        T, U, V = int(obj["T"]), int(obj["U"]), int(obj["V"])
        logits = _as_array(obj, "logits", (T, U + 1, V))
        f = lambda z: rnnt_loss(z, labels, blank)[0]
        loss, grad = rnnt_loss(logits, labels, blank)
        x = logits
        if args.occupancy:
            grid = occupancy(logits, labels, blank)
    elif args.mode == "pruned":
        enc, pred = _as_array(obj, "enc"), _as_array(obj, "pred")
        window = args.window if args.window is not None else len(labels) + 1
        bounds = prune_bounds(enc, pred, labels, window, blank)
        if "logits" in obj:
            T, V = enc.shape
            full = _as_array(obj, "logits", (T, len(labels) + 1, V))
        else:
            full = trivial_join(enc, pred)
        x = gather_window(full, bounds)
        f = lambda z: pruned_rnnt_loss(z, bounds, labels, blank)[0]
        loss, grad = pruned_rnnt_loss(x, bounds, labels, blank)
        out["bounds"] = {"lo": bounds.lo.tolist(), "window": bounds.window}
        if args.occupancy:
            grid = occupancy(enc, labels, blank, pred=pred)
    elif args.mode == "ctc":
        T, V = int(obj["T"]), int(obj["V"])
        x = _as_array(obj, "logits", (T, V))
        f = lambda z: ctc_loss(z, labels, blank)[0]
        loss, grad = ctc_loss(x, labels, blank)
    else:
        est = [np.asarray(h, dtype=np.float64) for h in obj["estimated"]]
        tgt = [np.asarray(t, dtype=np.float64) for t in obj["targets"]]
        x = np.stack(est) if len({e.shape for e in est}) == 1 else None
        loss, grads = mask_loss(est, tgt)
        grad = np.stack(grads) if x is not None else None
        f = lambda h: mask_loss(list(h), tgt)[0]
        if args.grad_check and x is None:
            raise ValueError("--grad-check for mask mode needs equally shaped channels")

    out["loss"] = loss
    if grad is not None:
        out["grad"] = np.asarray(grad).tolist()
    if args.grad_check:
        numeric = numerical_gradient(f, x)
        out["grad_check"] = {"max_rel_err": max_relative_error(grad, numeric), "step": 1e-4}
    if grid is not None:
        _check_output(args.occupancy)
        atomic_write(args.occupancy, json.dumps(grid.to_dict()) + "\n")
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


# parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=None, help=f"worker processes (default ${JOBS_ENV} or 1)")
    common.add_argument("--log-level", default="WARNING")

    parser = _Parser(prog="multitalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("subsegment", parents=[common], help="split segments at long pauses")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_subsegment)

    p = sub.add_parser("fit-stats", parents=[common], help="fit pause/overlap histograms")
    p.add_argument("--meetings", required=True)
    p.add_argument("--bin-width", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_stats)

    p = sub.add_parser("simulate", parents=[common], help="generate training mixtures")
    p.add_argument("--segments", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--max-speakers", type=int, default=3)
    p.add_argument("--max-speaker-dur", type=float, default=15.0)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--audio", action="store_true", help="also render waveforms")
    p.add_argument("--audio-dir", default=None)
    p.add_argument("--rir-dir", default=None)
    p.add_argument("--noise-dir", default=None)
    p.add_argument("--noise-snr", type=float, default=None, help="noise SNR in dB")
    p.add_argument("--loudness", default=None, help="MIN:MAX integrated loudness in LUFS, e.g. -25:-20")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("heat", parents=[common], help="build per-channel references")
    p.add_argument("--mixtures", required=True)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("score", parents=[common], help="score multi-channel hypotheses")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--metric", choices=["orc", "cpwer", "wer"], default="orc")
    p.add_argument("--ngram", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("loss", parents=[common], help="evaluate a loss lattice")
    p.add_argument("--mode", choices=["rnnt", "pruned", "ctc", "mask"], required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--grad-check", action="store_true")
    p.add_argument("--occupancy", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_loss)
    return parser


def _glue_dash_values(argv):
    """Let ``--loudness -25:-20`` through; argparse would read the value as an option."""
    out = []
    it = iter(argv)
    for a in it:
        if a == "--loudness":
            value = next(it, None)
            out.append(a if value is None else f"{a}={value}")
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _glue_dash_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"multitalk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"multitalk: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"multitalk: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
