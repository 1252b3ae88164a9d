"""Command-line entry point.

    sbm-ising [--config PATH] [--out DIR] [--seed U64] [--threads N] COMMAND [-D key=value ...]

Each run merges built-in defaults, the JSON config file and ``-D`` overrides
(in that order), validates the result and writes it to ``OUT/config.json``
before doing any work. Malformed configurations exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from . import cw
from .experiments import (verify_clt_glauber, verify_clt_lattice, verify_concentration,
                          verify_critical, verify_mixture, verify_slln)
from .glauber import ChainSettings, Init, run_chain
from .graph import ModelParams, sample_graph
from .lattice import (MAX_ENUM_N, MAX_LATTICE_N, approx_partition, exact_partition_cw,
                      exact_partition_sbm, finite_free_energy)

log = logging.getLogger("sbm_ising")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SKIPPED = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"config field '{key}': {message}")
        self.key = key


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Parameter sequence indexed by ``n``: ``const:v``, ``c_over_n:c`` or ``pow:a`` (``n**a``)."""

    kind: str
    value: float

    def at(self, n: int) -> float:
        if self.kind == "const":
            return self.value
        if self.kind == "c_over_n":
            return self.value / n
        return float(n) ** self.value

    def __str__(self):
        return f"{self.kind}:{self.value!r}"


def parse_schedule(spec, key: str = "schedule") -> Schedule:
    if isinstance(spec, bool):
        raise ConfigError(key, f"expected a number or schedule string, got {spec!r}")
    if isinstance(spec, (int, float)):
        return Schedule("const", float(spec))
    if not isinstance(spec, str) or ":" not in spec:
        raise ConfigError(key, f"expected 'const:v', 'c_over_n:c' or 'pow:a', got {spec!r}")
    kind, _, raw = spec.partition(":")
    if kind not in ("const", "c_over_n", "pow"):
        raise ConfigError(key, f"unknown schedule kind {kind!r}")
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(key, f"schedule value {raw!r} is not a number") from None
    if not math.isfinite(value):
        raise ConfigError(key, "schedule value must be finite")
    return Schedule(kind, value)


def schedule_values(schedule: Schedule, ns, key: str, lower=0.0, upper=1.0, open_lower=False):
    out = []
    for n in ns:
        v = schedule.at(n)
        if v > upper or v < lower or (open_lower and v == lower):
            raise ConfigError(key, f"schedule {schedule} gives {v} at n={n}, outside the allowed range")
        out.append(v)
    return out


def check_growth(ns, ps) -> list[str]:
    """Warnings when ``n p_n`` fails to increase along the configured sizes."""
    warnings = []
    pairs = sorted(zip(ns, ps))
    for (n0, p0), (n1, p1) in zip(pairs, pairs[1:]):
        if n1 * p1 <= n0 * p0:
            warnings.append(f"n*p_n does not increase between n={n0} and n={n1}")
    return warnings


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

COMMON = {"seed": 0, "threads": 1, "out": "out"}

DEFAULTS = {
    "phase-diagram": {"alphas": [0.5], "betas": [1.0]},
    "enumerate": {"n": [100], "beta": 1.0, "alpha": "const:1.0", "p": None, "graph_seed": None,
                  "top_k": 10, "write_lattice": False},
    "simulate": {"n": [200], "beta": 1.0, "alpha": "const:1.0", "p": "const:1.0", "mode": "cw",
                 "num_samples": 1000, "thinning_sweeps": 5, "burn_in_sweeps": None,
                 "rescale_exponent": 0.0, "num_chains": 1, "inits": ["ALL_PLUS"], "graph_seed": None},
    "verify": {"target": None, "n": None, "beta": None, "alpha": None, "p": None, "c": None,
               "mode": "cw", "radius": None, "num_samples": 10000, "thinning_sweeps": 10,
               "burn_in_sweeps": None, "graph_seed": 1, "num_graphs": 200, "num_configs": 50,
               "rho": None},
    "graph": {"n": 100, "p": "const:0.5", "alpha": "const:0.5"},
}

TARGETS = ("SLLN", "MIXTURE", "CLT", "CRITICAL", "CONCENTRATION")


def _parse_override(text: str):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(text, "overrides must look like key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def resolve_config(command: str, args) -> dict:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[command])
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"file {config_path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc})") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config", "top level must be an object")
        cfg.update(loaded)
    for text in getattr(args, "define", None) or []:
        key, value = _parse_override(text)
        cfg[key] = value
    for key in ("seed", "threads", "out"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    if command == "verify" and getattr(args, "target", None) is not None:
        cfg["target"] = args.target
    unknown = set(cfg) - set(COMMON) - set(DEFAULTS[command])
    if unknown:
        raise ConfigError(sorted(unknown)[0], f"not a recognised field for '{command}'")
    return cfg


def _int(cfg, key, lo=None, hi=None):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if lo is not None and v < lo or hi is not None and v > hi:
        raise ConfigError(key, f"value {v} outside [{lo}, {hi}]")
    return v


def _float(cfg, key, lo=None, hi=None, open_lo=False):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if lo is not None and (v < lo or (open_lo and v == lo)) or hi is not None and v > hi:
        raise ConfigError(key, f"value {v} out of range")
    return float(v)


def _float_list(cfg, key, lo=None, hi=None, open_lo=False):
    v = cfg[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(key, "expected a non-empty list of numbers")
    return [_float({key: x}, key, lo, hi, open_lo) for x in v]


def _n_list(cfg, key="n", limit=None):
    v = cfg[key]
    ns = v if isinstance(v, list) else [v]
    if not ns:
        raise ConfigError(key, "expected at least one size")
    out = []
    for x in ns:
        n = _int({key: x}, key, 2, limit)
        if n % 2:
            raise ConfigError(key, f"n must be even, got {n}")
        out.append(n)
    return out


def _common(cfg):
    _int(cfg, "seed", 0, 2**64 - 1)
    _int(cfg, "threads", 1)
    if not isinstance(cfg["out"], str) or not cfg["out"]:
        raise ConfigError("out", "expected a directory path")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


PHASE_COLUMNS = ["alpha", "beta", "regime", "m_g", "m_l", "M0", "M1", "M2", "epsilon", "beta_c",
                 "beta_star"]


def phase_row(point: cw.PhasePoint) -> list:
    return [point.alpha, point.beta, point.regime.value, point.m_g, point.m_l, point.M0, point.M1,
            point.M2, point.epsilon_gap, point.beta_c, point.beta_star]


def read_phase_csv(path) -> list[dict]:
    """Parse a phase-diagram CSV back into typed rows (empty cells become ``None``)."""
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if k == "regime":
                    row[k] = v
                else:
                    row[k] = None if v == "" else float(v)
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_phase_diagram(cfg, out: Path) -> int:
    alphas = _float_list(cfg, "alphas", 0.0, 1.0)
    betas = _float_list(cfg, "betas", 0.0, None, open_lo=True)
    path = out / "phase_diagram.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PHASE_COLUMNS)
        for a in alphas:
            for b in betas:
                w.writerow([_cell(v) for v in phase_row(cw.classify_phase(a, b))])
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_enumerate(cfg, out: Path) -> int:
    ns = _n_list(cfg, limit=MAX_LATTICE_N)
    beta = _float(cfg, "beta", 0.0, None, open_lo=True)
    alphas = schedule_values(parse_schedule(cfg["alpha"], "alpha"), ns, "alpha")
    top_k = _int(cfg, "top_k", 0)
    quenched = cfg["p"] is not None
    if quenched:
        ps = schedule_values(parse_schedule(cfg["p"], "p"), ns, "p", open_lower=True)
        if max(ns) > MAX_ENUM_N:
            raise ConfigError("n", f"quenched enumeration needs n <= {MAX_ENUM_N}")
        for msg in check_growth(ns, ps):
            log.warning(msg)
    graph_seed = cfg["seed"] if cfg["graph_seed"] is None else _int(cfg, "graph_seed", 0, 2**64 - 1)
    results = []
    for i, (n, alpha) in enumerate(zip(ns, alphas)):
        log_z, measure = exact_partition_cw(n, beta, alpha)
        try:
            approx = approx_partition(n, beta, alpha)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            log.warning("no asymptotic approximation at n=%d: %s", n, exc)
            approx = None
        entry = {
            "n": n, "beta": beta, "alpha": alpha, "log_Z": log_z, "log_Z_approx": approx,
            "free_energy": finite_free_energy(log_z, n, beta),
            "regime": cw.classify_phase(alpha, beta).regime.value,
            "top_k": [] if measure is None else [list(t) for t in measure.top_k(top_k)],
        }
        if quenched:
            g = sample_graph(ModelParams(n, beta, ps[i], alpha), graph_seed)
            lq = exact_partition_sbm(g, beta)
            entry.update({"p": ps[i], "graph_seed": graph_seed, "log_Z_quenched": lq,
                          "free_energy_quenched": finite_free_energy(lq, n, beta)})
        if cfg["write_lattice"] and measure is not None:
            measure.to_csv(out / f"lattice_n{n}.csv")
        results.append(entry)
        print(f"n={n} log_Z={log_z!r} approx={approx!r} f={entry['free_energy']!r}")
        for m1, m2, pr in entry["top_k"]:
            print(f"  ({m1!r}, {m2!r}) {pr!r}")
    write_json(out / "enumerate.json", results)
    return EXIT_OK


def cmd_simulate(cfg, out: Path) -> int:
    ns = _n_list(cfg)
    beta = _float(cfg, "beta", 0.0, None, open_lo=True)
    alphas = schedule_values(parse_schedule(cfg["alpha"], "alpha"), ns, "alpha")
    ps = schedule_values(parse_schedule(cfg["p"], "p"), ns, "p", open_lower=True)
    for msg in check_growth(ns, ps):
        log.warning(msg)
    mode = cfg["mode"]
    if mode not in ("cw", "sbm"):
        raise ConfigError("mode", f"expected 'cw' or 'sbm', got {mode!r}")
    num_samples = _int(cfg, "num_samples", 1)
    thinning = _int(cfg, "thinning_sweeps", 1)
    burn = None if cfg["burn_in_sweeps"] is None else _int(cfg, "burn_in_sweeps", 0)
    exponent = _float(cfg, "rescale_exponent", 0.0, 1.0)
    chains = _int(cfg, "num_chains", 1)
    try:
        inits = [Init(x) for x in cfg["inits"]]
    except (ValueError, TypeError):
        raise ConfigError("inits", f"expected a list drawn from {[i.value for i in Init]}") from None
    graph_seed = cfg["seed"] if cfg["graph_seed"] is None else _int(cfg, "graph_seed", 0, 2**64 - 1)
    for n, alpha, p in zip(ns, alphas, ps):
        params = ModelParams(n, beta, p, alpha)
        settings = ChainSettings.defaults(n, beta, alpha, thinning_sweeps=thinning,
                                          num_samples=num_samples, seed=cfg["seed"], init=inits[0])
        if burn is not None:
            settings = ChainSettings(burn, thinning, num_samples, cfg["seed"], inits[0])
        target = sample_graph(params, graph_seed) if mode == "sbm" else params
        if mode == "sbm":
            write_json(out / f"graph_n{n}.json", target.to_dict())
        batch = run_chain(target, beta, settings, exponent, num_chains=chains, inits=inits,
                          threads=cfg["threads"])
        batch.to_csv(out / f"samples_n{n}.csv")
        log.info("n=%d: %d samples written", n, batch.num_samples)
    return EXIT_OK


def _need(cfg, *keys):
    for k in keys:
        if cfg[k] is None:
            raise ConfigError(k, f"required for target {cfg['target']}")


def run_verify(cfg) -> dict:
    target = cfg["target"]
    if target not in TARGETS:
        raise ConfigError("target", f"expected one of {TARGETS}, got {target!r}")
    threads = cfg["threads"]
    if target == "SLLN":
        _need(cfg, "n", "beta", "alpha")
        kw = {} if cfg["radius"] is None else {"radius": _float(cfg, "radius", 0.0, None, True)}
        return verify_slln(_int(cfg, "n", 2), _float(cfg, "beta", 0, None, True),
                           _float(cfg, "alpha", 0, 1), **kw)
    if target == "MIXTURE":
        _need(cfg, "c")
        kw = {}
        if cfg["n"] is not None:
            kw["n"] = _int(cfg, "n", 2)
        if cfg["beta"] is not None:
            kw["beta"] = _float(cfg, "beta", 0, None, True)
        return verify_mixture(_float(cfg, "c", 0.0), **kw)
    if target == "CLT":
        _need(cfg, "n", "beta", "alpha")
        n, beta, alpha = _int(cfg, "n", 2), _float(cfg, "beta", 0, None, True), _float(cfg, "alpha", 0, 1)
        if beta >= cw.critical_beta(alpha):
            raise ConfigError("beta", "the CLT check needs beta below 2/(1+alpha)")
        if cfg["mode"] == "cw":
            return verify_clt_lattice(n, beta, alpha)
        if cfg["mode"] != "sbm":
            raise ConfigError("mode", f"expected 'cw' or 'sbm', got {cfg['mode']!r}")
        _need(cfg, "p")
        burn = None if cfg["burn_in_sweeps"] is None else _int(cfg, "burn_in_sweeps", 0)
        return verify_clt_glauber(n, beta, alpha, _float(cfg, "p", 0, 1, True),
                                  num_samples=_int(cfg, "num_samples", 2), seed=cfg["seed"],
                                  graph_seed=_int(cfg, "graph_seed", 0, 2**64 - 1),
                                  thinning_sweeps=_int(cfg, "thinning_sweeps", 1),
                                  burn_in_sweeps=burn, threads=threads)
    if target == "CRITICAL":
        _need(cfg, "n", "alpha")
        return verify_critical(_int(cfg, "n", 2), _float(cfg, "alpha", 0, 1))
    kw = {}
    for key in ("n",):
        if cfg[key] is not None:
            kw[key] = _int(cfg, key, 2)
    for key in ("p", "alpha"):
        if cfg[key] is not None:
            kw[key] = _float(cfg, key, 0, 1)
    if cfg["rho"] is not None:
        kw["rho"] = _float(cfg, "rho", 0, None, True)
    return verify_concentration(num_graphs=_int(cfg, "num_graphs", 1),
                                num_configs=_int(cfg, "num_configs", 1), seed=cfg["seed"],
                                threads=threads, **kw)


def cmd_verify(cfg, out: Path) -> int:
    rep = run_verify(cfg)
    write_json(out / f"verify_{rep['test'].lower()}.json", rep)
    print(json.dumps({k: rep[k] for k in ("test", "statistic", "threshold", "pass", "status")}))
    if rep["status"] == "SKIPPED":
        return EXIT_SKIPPED
    return EXIT_OK if rep["pass"] else EXIT_FAIL


def cmd_graph(cfg, out: Path) -> int:
    n = _n_list(cfg)[0]
    alpha = schedule_values(parse_schedule(cfg["alpha"], "alpha"), [n], "alpha")[0]
    p = schedule_values(parse_schedule(cfg["p"], "p"), [n], "p", open_lower=True)[0]
    g = sample_graph(ModelParams(n, 1.0, p, alpha), cfg["seed"])
    write_json(out / "graph.json", g.to_dict())
    print(f"n={n} intra={len(g.intra)} inter={len(g.inter)}")
    return EXIT_OK


COMMANDS = {
    "phase-diagram": cmd_phase_diagram,
    "enumerate": cmd_enumerate,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "graph": cmd_graph,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a flag given before the command from being reset by the subparser
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON configuration file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="unsigned 64-bit master seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    common.add_argument("-D", "--define", action="append", default=argparse.SUPPRESS,
                        metavar="KEY=VALUE", help="override one config field (value parsed as JSON)")
    parser = argparse.ArgumentParser(prog="sbm-ising", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("phase-diagram", parents=[common], help="classify a grid of (alpha, beta)")
    sub.add_parser("enumerate", parents=[common], help="exact lattice partition functions")
    sub.add_parser("simulate", parents=[common], help="Glauber sampling of magnetizations")
    v = sub.add_parser("verify", parents=[common], help="run one acceptance experiment")
    v.add_argument("target", nargs="?", choices=TARGETS)
    sub.add_parser("graph", parents=[common], help="sample and dump a block graph")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        _common(cfg)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "config.json", {"command": args.command, **cfg})
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
