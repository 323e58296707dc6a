"""Batch entry points: gen, train, decode, eval, serve.

Exit codes: 0 ok, 2 I/O, 3 data, 4 model, 64 usage.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .config import EngineConfig, config_to_dict, load_config
from .engine import Engine, canonical_json, decode_session
from .errors import ModelShapeError
from .hmm import ModelSet, baum_welch_train, flat_start, load_models, save_models
from .kinematics import estimate_rest_centroid, extract_features, feature_matrix
from .lexicon import Lexicon
from .mapcontext import load_map
from .metrics import evaluate
from .phoneme import PHONEME_ORDER
from .session import load_session, save_session
from .synth import SyntheticConfig, generate_synthetic

EXIT_IO = 2
EXIT_DATA = 3
EXIT_MODEL = 4
EXIT_USAGE = 64


class _Fail(click.ClickException):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.exit_code = code


@click.group(context_settings={"show_default": True})
def cli():
    """Continuous gesture/speech interpretation engine."""


@cli.command()
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--sessions", default=10, type=int, help="Number of sessions to generate.")
@click.option("--noise", default=SyntheticConfig.noise_sigma, type=float,
              help="Positional noise sigma in display widths.")
@click.option("--seed", default=0, type=int)
@click.option("--phrases-max", default=SyntheticConfig.phrases_max, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def gen(map_path, sessions, noise, seed, phrases_max, out_dir, config_path):
    """Generate a synthetic labeled corpus."""
    ctx = load_map(map_path)
    cfg = SyntheticConfig(
        n_sessions=sessions, noise_sigma=noise, seed=seed, phrases_max=phrases_max
    )
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot write to {out_dir}: {e}")
    records = generate_synthetic(cfg, ctx)
    names = []
    for rec in records:
        name = f"{rec.session_id}.ndjson"
        save_session(rec, out / name)
        names.append(name)
    manifest = {
        "map": str(map_path),
        "noise_sigma": noise,
        "seed": seed,
        "sessions": names,
    }
    (out / "manifest.json").write_text(canonical_json(manifest) + "\n")
    click.echo(f"wrote {len(names)} sessions to {out_dir}")
    return 0


def _load_corpus(data_dir):
    paths = sorted(Path(data_dir).glob("*.ndjson"))
    if not paths:
        raise _Fail(EXIT_DATA, f"no .ndjson sessions in {data_dir}")
    return [load_session(p) for p in paths]


def _session_features(record, cfg: EngineConfig):
    head = [s for s in record.samples if s.t <= record.samples[0].t + cfg.kinematics.rest_window]
    rest_ref = estimate_rest_centroid(head if len(head) >= 2 else record.samples)
    return extract_features(record.samples, rest_ref)


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--iters", default=20, type=int, help="Baum-Welch iterations.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def train(data_dir, out_path, iters, config_path):
    """Train per-phoneme HMMs on truth-labeled corpus segments."""
    cfg = load_config(config_path)
    corpus = _load_corpus(data_dir)
    topology = cfg.decoder.topology()

    by_phoneme = {k: [] for k in PHONEME_ORDER}
    for rec in corpus:
        feats = _session_features(rec, cfg)
        X = feature_matrix(feats)
        times = [f.t for f in feats]
        import numpy as np

        t = np.array(times)
        for seg in rec.truth_segments:
            lo = int(np.searchsorted(t, seg.t0 - 1e-9, side="left"))
            hi = int(np.searchsorted(t, seg.t1 - 1e-9, side="left"))
            if hi - lo >= topology.n_states(seg.phoneme):
                by_phoneme[seg.phoneme].append(X[lo:hi])

    models = {}
    for kind in PHONEME_ORDER:
        segs = by_phoneme[kind]
        if not segs:
            raise _Fail(EXIT_DATA, f"corpus has no usable segments for phoneme '{kind.value}'")
        n = topology.n_states(kind)
        init = flat_start(n, segs, var_floor=cfg.train.var_floor)
        models[kind] = baum_welch_train(
            init, segs, max_iters=iters, tol=cfg.train.tol, var_floor=cfg.train.var_floor
        )
        click.echo(
            f"{kind.value:12s} states={n} segments={len(segs)} "
            f"final_ll={models[kind].ll_history[-1]:.2f}"
        )
    model_set = ModelSet(models=models, topology=topology, config=config_to_dict(cfg))
    save_models(model_set, out_path)
    click.echo(f"wrote model file {out_path}")
    return 0


def _build_engine(model_path, map_path, config_path=None, lexicon_path=None) -> Engine:
    model_set = load_models(model_path)
    ctx = load_map(map_path)
    cfg = load_config(config_path)
    lex = Lexicon.load(lexicon_path) if lexicon_path else Lexicon()
    return Engine(model_set, ctx, cfg, lex)


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--session", "session_path", required=True, type=click.Path(exists=True))
@click.option("--fusion", type=click.Choice(["on", "off"]), default="on")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--lexicon", "lexicon_path", default=None, type=click.Path(exists=True))
def decode(model_path, map_path, session_path, fusion, out_path, config_path, lexicon_path):
    """Decode one session file into phrase records."""
    engine = _build_engine(model_path, map_path, config_path, lexicon_path)
    record = load_session(session_path)
    try:
        decoded = decode_session(engine, record, fusion_on=(fusion == "on"))
    except ModelShapeError as e:
        raise _Fail(EXIT_MODEL, str(e))
    lines = [canonical_json(rec) for rec in decoded.records]
    Path(out_path).write_text("".join(line + "\n" for line in lines))
    click.echo(f"wrote {len(lines)} phrase records to {out_path}")
    return 0


@cli.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--fusion", type=click.Choice(["on", "off"]), default="on")
@click.option("--json", "json_path", default=None, type=click.Path())
@click.option("--workers", default=1, type=int)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--lexicon", "lexicon_path", default=None, type=click.Path(exists=True))
def eval_cmd(model_path, map_path, data_dir, fusion, json_path, workers, config_path, lexicon_path):
    """Decode a corpus and score it against its ground truth."""
    engine = _build_engine(model_path, map_path, config_path, lexicon_path)
    corpus = _load_corpus(data_dir)
    fusion_on = fusion == "on"
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                decoded = list(
                    pool.map(lambda rec: decode_session(engine, rec, fusion_on), corpus)
                )
        else:
            decoded = [decode_session(engine, rec, fusion_on) for rec in corpus]
    except ModelShapeError as e:
        raise _Fail(EXIT_MODEL, str(e))
    m = evaluate(decoded, corpus)
    click.echo(m.format_table())
    if json_path:
        Path(json_path).write_text(canonical_json(m.to_dict()) + "\n")
    return 0


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8731, type=int)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--lexicon", "lexicon_path", default=None, type=click.Path(exists=True))
@click.option("--frontend", "frontend_dir", default=None, type=click.Path())
def serve(model_path, map_path, host, port, config_path, lexicon_path, frontend_dir):
    """Run the websocket gateway and REST service."""
    import uvicorn

    from .service import create_app

    engine = _build_engine(model_path, map_path, config_path, lexicon_path)
    app = create_app(engine, frontend_dir=frontend_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot bind {host}:{port}: {e}")
    return 0


@cli.command("make-map")
@click.option("--out", "out_path", required=True, type=click.Path())
def make_map(out_path):
    """Write the built-in demo map file."""
    from .mapcontext import demo_map, save_map

    save_map(demo_map(), out_path)
    click.echo(f"wrote {out_path}")
    return 0


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, standalone_mode=False)
        return int(rv) if isinstance(rv, int) else 0
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show(file=sys.stderr)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show(file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
