"""Command-line front end: ``graph2sample {test,simulate,reproduce-table1,replay}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import SinkhornConvergenceError
from .embedding import ase, select_dimension
from .graph import GraphFormatError, RngSeed, load_graph
from .report import RunManifest, power_svg, sha256
from .simulate import (DISPLAY, TESTS, UNIVARIATE_SCENARIOS, SyntheticConfig, align, curves_to_csv, embed_pair,
                       hemisphere_test, run_synthetic_power, run_univariate_power)
from .stats import DegenerateInputError, ksample_transform, permutation_test

SCALES = {
    "fig1": {
        "desk": {"sizes": [50, 100, 200], "replicates": 200, "permutations": 500},
        "full": {"sizes": [50, 100, 150, 200, 250, 300], "replicates": 1000, "permutations": 1000},
    },
    "fig2": {
        "desk": {"sizes": [20, 50, 100, 200], "replicates": 100, "permutations": 200},
        "full": {"sizes": [20, 40, 60, 80, 100, 120, 140, 160, 180, 200], "replicates": 500,
                  "permutations": 1000},
    },
}
RHOS = (0.0, 0.5, 1.0)


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _dim(text):
    return "auto" if str(text) == "auto" else int(text)


# option name -> (converter, default); None means "no default, required or optional"
OPTIONS = {
    "test": {
        "d": (_dim, "auto"), "align": (str, "otp"), "stat": (str, "mgc"), "B": (int, 1000),
        "alpha": (float, 0.05), "seed": (int, 0), "correct_variance": (_bool, False),
        "format": (str, "dense-csv"), "index_base": (int, 0), "header": (_bool, False),
        "tau": (float, 0.0), "out": (str, "graph2sample_test.json"),
    },
    "simulate": {
        "scale": (str, "desk"), "seed": (int, 0), "outdir": (str, "."), "left": (str, None),
        "right": (str, None), "replicates": (int, None), "permutations": (int, None),
        "sizes": (_int_list, None), "alpha": (float, 0.05), "tau": (float, 0.0), "threads": (int, None),
    },
    "reproduce-table1": {
        "B": (int, 999), "seed": (int, 0), "outdir": (str, "."), "correct_variance": (_bool, False),
        "dims": (_int_list, [1, 2, 3, 4, 5]), "tau": (float, 0.0),
    },
}
POSITIONALS = {"test": ("graph1", "graph2"), "simulate": ("experiment",), "reproduce-table1": ("left", "right")}


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge flags over the config file over built-in defaults."""
    file_cfg = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_cfg) - set(OPTIONS[command])
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    cfg = {}
    for key, (convert, default) in OPTIONS[command].items():
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = convert(flag)
        elif key in file_cfg:
            cfg[key] = convert(file_cfg[key])
        else:
            cfg[key] = default
    for key in POSITIONALS[command]:
        cfg[key] = getattr(args, key)
    return cfg


def config_to_argv(command: str, cfg: dict) -> list:
    argv = [command] + [str(cfg[k]) for k in POSITIONALS[command]]
    for key in OPTIONS[command]:
        value = cfg.get(key)
        if value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            argv.append(flag if value else "--no-" + key.replace("_", "-"))
        elif isinstance(value, list):
            argv += [flag, ",".join(str(v) for v in value)]
        else:
            argv += [flag, str(value)]
    return argv


def _abs(path):
    return None if path is None else str(Path(path).resolve())


def _finish(manifest: RunManifest, t0: float, path: Path) -> None:
    manifest.runtime_seconds = round(time.perf_counter() - t0, 3)
    manifest.write(path)
    print(f"manifest: {path}")


def _choose_dimension(A, B) -> int:
    # the larger of the two per-graph elbows keeps every detected signal
    return max(select_dimension(ase(G, 1).all_singular_values) for G in (A, B))


def cmd_test(cfg: dict) -> int:
    t0 = time.perf_counter()
    if cfg["stat"] not in TESTS:
        raise ValueError(f"unknown statistic {cfg['stat']!r}; choose from {sorted(TESTS)}")
    cfg["graph1"], cfg["graph2"] = _abs(cfg["graph1"]), _abs(cfg["graph2"])
    A = load_graph(cfg["graph1"], cfg["format"], cfg["index_base"], header=cfg["header"])
    B = load_graph(cfg["graph2"], cfg["format"], cfg["index_base"], header=cfg["header"])
    d = _choose_dimension(A, B) if cfg["d"] == "auto" else cfg["d"]
    master = RngSeed(cfg["seed"])
    # same seed layout as reproduce-table1, so a table cell can be rerun alone
    X, Y = embed_pair(A, B, d, correct_variance=cfg["correct_variance"], seed=master.spawn(d, 1))
    Z, E = ksample_transform(X, align(X, Y, cfg["align"]))
    name = TESTS[cfg["stat"]]
    res = permutation_test(Z, E, (name,), cfg["B"], master.spawn(d), cfg["tau"])[name]

    reject = res.p_value <= cfg["alpha"]
    print(f"{DISPLAY[cfg['stat']]}+{DISPLAY[cfg['align']]} at d={d}: statistic={res.statistic:.6g} "
          f"p={res.p_value:.4g} -> {'reject' if reject else 'do not reject'} H0 at alpha={cfg['alpha']:g}")
    out = Path(cfg["out"]).resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = res.to_dict()
    payload.update({"d": d, "alignment": cfg["align"], "alpha": cfg["alpha"], "reject": bool(reject),
                    "n_vertices": [A.n, B.n]})
    out.write_text(json.dumps(payload, indent=2) + "\n")
    cfg["out"] = str(out)
    manifest = RunManifest("test", cfg, cfg["seed"], __version__)
    manifest.add_output(out)
    _finish(manifest, t0, out.with_suffix(".manifest.json"))
    return 0


def _panel_seed(seed: int, panel: int) -> int:
    return int(np.random.SeedSequence([seed, panel]).generate_state(1)[0])


def cmd_simulate(cfg: dict, threads=None) -> int:
    t0 = time.perf_counter()
    exp = cfg["experiment"]
    if exp not in SCALES:
        raise ValueError(f"unknown experiment {exp!r}; choose from {sorted(SCALES)}")
    if cfg["scale"] not in ("desk", "full"):
        raise ValueError(f"unknown scale {cfg['scale']!r}")
    scale = SCALES[exp][cfg["scale"]]
    for key in ("sizes", "replicates", "permutations"):
        if cfg[key] is None:
            cfg[key] = scale[key]
    outdir = Path(cfg["outdir"]).resolve()
    outdir.mkdir(parents=True, exist_ok=True)
    cfg["outdir"] = str(outdir)
    manifest = RunManifest(f"simulate {exp}", cfg, cfg["seed"], __version__)

    def emit(stem, curves, title):
        csv_path, svg_path = outdir / f"{stem}.csv", outdir / f"{stem}.svg"
        curves_to_csv([c for _, c in curves], csv_path)
        power_svg(curves, title, svg_path, alpha=cfg["alpha"])
        manifest.add_output(csv_path)
        manifest.add_output(svg_path)
        print(f"wrote {csv_path.name}, {svg_path.name}")

    if exp == "fig1":
        for i, scenario in enumerate(UNIVARIATE_SCENARIOS):
            res = run_univariate_power(scenario, cfg["sizes"], cfg["replicates"], cfg["alpha"], ("dcorr", "mgc"),
                                       cfg["permutations"], _panel_seed(cfg["seed"], i), tau=cfg["tau"],
                                       threads=threads)
            emit(f"fig1_{scenario}", [(DISPLAY[t], c) for t, c in res.items()], scenario)
    else:
        if not cfg["left"] or not cfg["right"]:
            raise ValueError("fig2 needs --left and --right graph files")
        cfg["left"], cfg["right"] = _abs(cfg["left"]), _abs(cfg["right"])
        panel = 0
        for side in ("left", "right"):
            source = ase(load_graph(cfg[side]), 3).positions
            for rho in RHOS:
                config = SyntheticConfig(source, rho=rho, r=1.0, alignments=("otp", "median"),
                                         tests=("dcorr", "mgc"), replicates=cfg["replicates"],
                                         alpha=cfg["alpha"], B=cfg["permutations"], d=3, tau=cfg["tau"],
                                         label=f"{side} rho={rho:g}")
                res = run_synthetic_power(config, cfg["sizes"], _panel_seed(cfg["seed"], panel), threads=threads)
                curves = [(f"{DISPLAY[t]}+{DISPLAY[a]}", c) for (t, a), c in res.items()]
                emit(f"fig2_{side}_rho{rho:g}", curves, f"{side} hemisphere, rho = {rho:g}")
                panel += 1
    _finish(manifest, t0, outdir / f"manifest_{exp}.json")
    return 0


def cmd_table1(cfg: dict) -> int:
    t0 = time.perf_counter()
    cfg["left"], cfg["right"] = _abs(cfg["left"]), _abs(cfg["right"])
    A_L, A_R = load_graph(cfg["left"]), load_graph(cfg["right"])
    table = hemisphere_test(A_L, A_R, cfg["dims"], ("otp", "median"), ("mgc", "dcorr"), cfg["B"], cfg["seed"],
                            correct_variance=cfg["correct_variance"], tau=cfg["tau"])
    outdir = Path(cfg["outdir"]).resolve()
    outdir.mkdir(parents=True, exist_ok=True)
    cfg["outdir"] = str(outdir)
    csv_path, json_path = outdir / "table1.csv", outdir / "table1.json"
    print(table.to_csv(csv_path), end="")
    json_path.write_text(table.to_json() + "\n")
    manifest = RunManifest("reproduce-table1", cfg, cfg["seed"], __version__)
    manifest.add_output(csv_path)
    manifest.add_output(json_path)
    _finish(manifest, t0, outdir / "manifest_table1.json")
    return 0


def cmd_replay(path, outdir=None, threads=None) -> int:
    """Rerun a manifest's command and compare output hashes."""
    manifest = RunManifest.read(path)
    command = manifest.command.split()[0]
    cfg = dict(manifest.config)
    expected = dict(manifest.outputs)
    if outdir is not None:
        outdir = Path(outdir).resolve()
        if command == "test":
            cfg["out"] = str(outdir / Path(cfg["out"]).name)
        else:
            cfg["outdir"] = str(outdir)
        expected = {str(outdir / Path(k).name): v for k, v in expected.items()}
    argv = config_to_argv(command, cfg)
    if threads is not None and command == "simulate":
        argv += ["--threads", str(threads)]
    code = main(argv)
    if code:
        return code
    mismatched = [p for p, digest in expected.items() if not Path(p).exists() or sha256(p) != digest]
    if mismatched:
        print("replay mismatch: " + ", ".join(mismatched), file=sys.stderr)
        return 1
    print(f"replay reproduced {len(expected)} output(s) exactly")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graph2sample",
                                     description="Two-sample tests for random dot product graphs.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    flag = argparse.BooleanOptionalAction

    p = sub.add_parser("test", help="test whether two graphs share a latent position distribution")
    p.add_argument("graph1")
    p.add_argument("graph2")
    p.add_argument("--d", help="embedding dimension or 'auto' (default auto)")
    p.add_argument("--align", choices=("otp", "median"))
    p.add_argument("--stat", choices=sorted(TESTS))
    p.add_argument("--B", type=int, help="permutations (default 1000)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--correct-variance", action=flag, help="inflate the larger graph's embedding noise")
    p.add_argument("--format", choices=("dense-csv", "edge-list"))
    p.add_argument("--index-base", type=int, choices=(0, 1))
    p.add_argument("--header", action=flag, help="dense CSV has a header row")
    p.add_argument("--tau", type=float)
    p.add_argument("--out", help="result JSON path")
    p.add_argument("--config", help="key = value file; flags take precedence")

    p = sub.add_parser("simulate", help="run the power experiments")
    p.add_argument("experiment", choices=sorted(SCALES))
    p.add_argument("--scale", choices=("desk", "full"))
    p.add_argument("--seed", type=int)
    p.add_argument("--outdir")
    p.add_argument("--left", help="left hemisphere graph (fig2)")
    p.add_argument("--right", help="right hemisphere graph (fig2)")
    p.add_argument("--replicates", type=int)
    p.add_argument("--permutations", type=int)
    p.add_argument("--sizes", help="comma-separated vertex counts")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    p.add_argument("--config")

    p = sub.add_parser("reproduce-table1", help="hemisphere p-values for d = 1..5")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--B", type=int, help="permutations (default 999)")
    p.add_argument("--seed", type=int)
    p.add_argument("--outdir")
    p.add_argument("--correct-variance", action=flag)
    p.add_argument("--dims", help="comma-separated dimensions (default 1,2,3,4,5)")
    p.add_argument("--tau", type=float)
    p.add_argument("--config")

    p = sub.add_parser("replay", help="rerun a manifest and verify its outputs")
    p.add_argument("manifest")
    p.add_argument("--outdir", help="write outputs here instead of the original location")
    p.add_argument("--threads", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return cmd_replay(args.manifest, args.outdir, args.threads)
        cfg = resolve(args.command, args)
        if args.command == "test":
            return cmd_test(cfg)
        if args.command == "simulate":
            # thread count never changes results, so it stays out of the manifest
            return cmd_simulate(cfg, threads=cfg.pop("threads"))
        return cmd_table1(cfg)
    except (FileNotFoundError, SinkhornConvergenceError, GraphFormatError, DegenerateInputError, ValueError,
            np.linalg.LinAlgError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
