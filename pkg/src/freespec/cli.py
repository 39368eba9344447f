"""Command-line experiment driver.

Every command reads a JSON config, validates it against a schema before
doing any work, and writes CSV tables or JSON reports into ``--out``.
Each output carries the tool version and the SHA-256 of the effective
config (after command-line overrides).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import ensembles as ens
from . import gof
from . import limitlaws as ll
from . import solver
from . import spectra as sp
from .errors import ConfigError, FreespecError, NumericError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FAIL = 0, 2, 3, 4

# -- schemas ---------------------------------------------------------------

_NUM = {"type": "number"}
_ENTRY = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {"kind": {"type": "string"}, "p": _NUM},
}
_ENSEMBLE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["function", "n"],
    "properties": {
        "function": {"type": "string"},
        "n": {"type": "integer", "minimum": 2},
        "m": {"type": "integer", "minimum": 1},
        "ratios": {"type": "array", "items": _NUM, "minItems": 1},
        "powers": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "ridge": {"type": "number", "minimum": 0},
        "law": _ENTRY,
    },
}
_LAW = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"type": "string"},
        "y": _NUM,
        "m": {"type": "integer"},
        "ratios": {"type": "array", "items": _NUM},
        "variance": _NUM,
        "a": _NUM,
    },
}
_GRID = {
    "type": "object",
    "additionalProperties": False,
    "required": ["start", "stop"],
    "properties": {
        "start": _NUM,
        "stop": _NUM,
        "step": {"type": "number", "exclusiveMinimum": 0},
        "points": {"type": "integer", "minimum": 2},
    },
    "oneOf": [{"required": ["step"]}, {"required": ["points"]}],
}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_TRIALS = {"type": "integer", "minimum": 0}
_FILES = {"oneOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}, "minItems": 1}]}


def _obj(required, **props):
    return {"type": "object", "additionalProperties": False, "required": required, "properties": props}


SCHEMAS = {
    "simulate": _obj(
        ["ensemble"],
        ensemble=dict(_ENSEMBLE, required=["function", "n", "law"]),
        spectrum={"enum": ["singular", "eigen"]},
        trials=_TRIALS,
        seed=_SEED,
        diagnostics=_obj([], alpha={"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                         p=_NUM, gamma=_NUM, delta=_NUM),
    ),
    "law": _obj(["law", "grid"], law=_LAW, grid=_GRID),
    "solve": {
        **_obj(["grid"], law=_LAW, moments={"type": "array", "items": _NUM, "minItems": 4},
               label={"type": "string"}, grid=_GRID),
        "oneOf": [{"required": ["law"]}, {"required": ["moments"]}],
    },
    "compare": {
        **_obj(["spectra"], spectra=_FILES, law=_LAW, reference=_FILES,
               statistic={"enum": ["ks", "levy", "radial_ks", "angular_ks", "moments"]},
               convention={"enum": ["squared", "unsquared"]},
               threshold={"type": "number", "minimum": 0}, ks_coeff={"type": "number", "exclusiveMinimum": 0},
               k={"type": "integer", "minimum": 1}),
        "oneOf": [{"required": ["law"]}, {"required": ["reference"]}],
    },
    "universality": _obj(
        ["ensemble", "laws"],
        ensemble=_ENSEMBLE,
        laws={"type": "array", "items": _ENTRY, "minItems": 2, "maxItems": 2},
        trials=_TRIALS,
        seed=_SEED,
        ks_coeff={"type": "number", "exclusiveMinimum": 0},
        min_pass_fraction={"type": "number", "minimum": 0, "maximum": 1},
    ),
}

SV_CONVENTION = "squared"


def validate(command: str, config: dict) -> None:
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError("invalid config at %s: %s" % (where, exc.message)) from None


# -- output helpers ----------------------------------------------------------


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


class Writer:
    def __init__(self, out: Path, digest: str):
        self.out = out
        self.digest = digest
        out.mkdir(parents=True, exist_ok=True)

    @property
    def banner(self) -> str:
        return "# freespec %s config_sha256=%s\n" % (__version__, self.digest)

    def csv(self, name: str, header, columns) -> Path:
        path = self.out / name
        cols = [np.asarray(c).ravel() for c in columns]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.banner)
            fh.write(",".join(header) + "\n")
            for row in zip(*cols):
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        body = dict(payload, freespec_version=__version__, config_sha256=self.digest)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(body, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
        return path


def _grid(g: dict) -> np.ndarray:
    a, b = float(g["start"]), float(g["stop"])
    if not b > a:
        raise ConfigError("grid stop must exceed start")
    if "points" in g:
        return np.linspace(a, b, int(g["points"]))
    k = int(round((b - a) / g["step"]))
    return a + g["step"] * np.arange(k + 1)


def _function_spec(e: dict) -> ens.FunctionSpec:
    kw = {k: e[k] for k in ("m", "ridge") if k in e}
    if "ratios" in e:
        kw["ratios"] = tuple(e["ratios"])
    if "powers" in e:
        kw["powers"] = tuple(e["powers"])
    return ens.FunctionSpec(e["function"], e["n"], **kw)


def _entry_law(d: dict) -> ens.EntryLaw:
    return ens.EntryLaw(d["kind"], d.get("p"))


def _need_seed(config: dict) -> int:
    if "seed" not in config:
        raise ConfigError("a seed is required for randomized commands")
    return int(config["seed"])


def _pool(threads: int):
    return ThreadPoolExecutor(max_workers=max(1, threads))


# -- commands ----------------------------------------------------------------


def _simulate_trial(spec, law, seed, t, kind, diag):
    try:
        f = ens.assemble(spec, ens.sample_tuple(spec, law, ens.trial_seed(seed, t)))
        s = sp.singular_values(f).values
        ev = sp.eigenvalues(f).values if kind == "eigen" else None
        d = None
        if diag is not None and f.shape[0] == f.shape[1]:
            alpha = complex(*diag.get("alpha", (0.0, 0.0)))
            c = sp.condition_diagnostics(f, alpha, diag.get("p", 2.0), diag.get("gamma", 0.5), diag.get("delta"))
            d = {"c0_moment": c.moment, "c1_smallest": c.smallest, "c2_tail": c.tail,
                 "tail_window_empty": c.tail_window_empty}
        return {"trial": t, "s": s, "ev": ev, "diag": d}
    except NumericError as exc:
        return {"trial": t, "error": "%s: %s" % (type(exc).__name__, exc)}


def cmd_simulate(config: dict, out: Writer, threads: int) -> int:
    spec = _function_spec(config["ensemble"])
    law = _entry_law(config["ensemble"]["law"])
    seed = _need_seed(config)
    trials = int(config.get("trials", 1))
    kind = config.get("spectrum", "singular")
    diag = config.get("diagnostics", {})
    if trials == 0:
        warnings.warn("trials=0: nothing to simulate")
    with _pool(threads) as pool:
        results = list(pool.map(lambda t: _simulate_trial(spec, law, seed, t, kind, diag), range(trials)))
    failures, smin, smax, diags = [], math.inf, -math.inf, []
    for r in results:
        t = r["trial"]
        if "error" in r:
            failures.append({"trial": t, "error": r["error"]})
            continue
        s = r["s"]
        smin, smax = min(smin, float(s[-1])), max(smax, float(s[0]))
        if kind == "eigen":
            out.csv("spectrum_%04d.csv" % t, ["re", "im"], [r["ev"].real, r["ev"].imag])
        else:
            out.csv("spectrum_%04d.csv" % t, ["s"], [s])
        if r["diag"] is not None:
            diags.append(dict(r["diag"], trial=t))
    summary = {
        "command": "simulate",
        "spectrum": kind,
        "trials": trials,
        "succeeded": trials - len(failures),
        "failure_count": len(failures),
        "failures": failures,
        "values_per_trial": min(spec.shape) if kind == "singular" else spec.shape[0],
        "min_singular_value": smin if smin < math.inf else None,
        "max_singular_value": smax if smax > -math.inf else None,
        "diagnostics": diags,
        "seed": seed,
    }
    if diags:
        summary["c0_max_moment"] = max(d["c0_moment"] for d in diags)
        summary["c1_min_smallest"] = min(d["c1_smallest"] for d in diags)
        summary["c2_max_tail"] = max(d["c2_tail"] for d in diags)
    out.json("summary.json", summary)
    return EXIT_OK


def cmd_law(config: dict, out: Writer, threads: int) -> int:
    law = ll.from_config(config["law"])
    x = _grid(config["grid"])
    if law.dim == 2:
        x = np.maximum(x, 0.0)
        out.csv("law.csv", ["r", "f", "radial_cdf"], [x, law.density(x), law.radial_cdf(x)])
    else:
        out.csv("law.csv", ["x", "density", "cdf"], [x, law.density(x), law.cdf(x)])
    return EXIT_OK


def _sv_for_solve(config: dict) -> solver.SVTransform:
    if "moments" in config:
        return solver.SVTransform.from_moments(config["moments"], config.get("label", "moments"))
    law = ll.from_config(config["law"])
    if law.dim != 2:
        raise ConfigError("solve needs an eigenvalue law (one of %s) or a moment list" % ", ".join(ll.EV_KINDS))
    return law.s_transform()


def cmd_solve(config: dict, out: Writer, threads: int) -> int:
    sv = _sv_for_solve(config)
    r = _grid(config["grid"])
    if r[0] <= 0:
        raise ConfigError("radial grid must start above 0")
    # Dense homotopy path, with the requested radii merged in.
    path = np.geomspace(1e-6, r[-1], 4000)
    full = np.unique(np.concatenate([path, r]))
    idx = np.searchsorted(full, r)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", solver.ResolutionWarning)
        fld = solver.solve_psi_kappa(sv, full)
        f = solver.density_from_psi(fld, warn=False)
    res = fld.residual
    out.csv(
        "psi_kappa.csv",
        ["r", "psi", "kappa", "f", "residual"],
        [r, fld.psi[idx], fld.kappa[idx], f[idx], res[idx]],
    )
    out.json(
        "transitions.json",
        {
            "command": "solve",
            "label": sv.label,
            "transitions": fld.transitions,
            "extra_root_radii": [float(v) for v in fld.r[fld.multiplicity > 0]],
            "radial_mass": solver.radial_mass(fld, f),
        },
    )
    return EXIT_OK


def _resolve(base: Path, files) -> list:
    files = [files] if isinstance(files, str) else list(files)
    return [p if p.is_absolute() else base / p for p in map(Path, files)]


def read_spectrum(path: Path):
    """Load a spectrum CSV: returns ``("singular", values)`` or ``("complex", values)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise ConfigError("cannot read spectrum %s: %s" % (path, exc)) from None
    if not lines:
        raise ConfigError("spectrum file %s is empty" % path)
    head, rows = lines[0].split(","), [ln.split(",") for ln in lines[1:]]
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(head))
    except ValueError:
        raise ConfigError("malformed spectrum file %s" % path) from None
    if head == ["s"]:
        return "singular", data[:, 0]
    if head == ["re", "im"]:
        return "complex", data[:, 0] + 1j * data[:, 1]
    raise ConfigError("unknown spectrum columns %s in %s" % (head, path))


def _load(paths) -> tuple:
    kinds, vals = set(), []
    for p in paths:
        k, v = read_spectrum(p)
        kinds.add(k)
        vals.append(v)
    if len(kinds) != 1:
        raise ConfigError("cannot pool singular and complex spectra")
    return kinds.pop(), np.concatenate(vals)


def cmd_compare(config: dict, out: Writer, threads: int, base: Path = Path(".")) -> int:
    kind, vals = _load(_resolve(base, config["spectra"]))
    coeff = config.get("ks_coeff", gof.KS_COEFF)
    convention = config.get("convention", SV_CONVENTION)
    if "reference" in config:
        kind_b, vals_b = _load(_resolve(base, config["reference"]))
        if kind != "singular" or kind_b != "singular":
            raise ConfigError("two-sample mode compares singular-value spectra")
        a = vals**2 if convention == "squared" else vals
        b = vals_b**2 if convention == "squared" else vals_b
        n = min(a.size, b.size)
        d = gof.two_sample_ks(a, b)
        thr = config.get("threshold", coeff * math.sqrt(2.0 / n))
        rep = gof.GoFReport("ks2", d, thr, bool(d <= thr), n, "two-sample", convention)
    else:
        law = ll.from_config(config["law"])
        stat = config.get("statistic", "radial_ks" if law.dim == 2 else "ks")
        if law.dim == 2:
            if kind != "complex" or stat not in ("radial_ks", "angular_ks"):
                raise ConfigError("eigenvalue laws compare complex spectra by radial_ks or angular_ks")
            value = gof.radial_ks(vals, law) if stat == "radial_ks" else gof.angular_ks(vals)
            conv = "modulus" if stat == "radial_ks" else "argument"
        else:
            if kind != "singular":
                raise ConfigError("singular-value laws need a singular spectrum")
            if law.kind in ll.SV_KINDS and convention != SV_CONVENTION:
                raise ConfigError("%s is a law of squared singular values; convention must be 'squared'" % law.kind)
            x = vals**2 if convention == "squared" else vals
            conv = convention
            if stat == "ks":
                value = gof.ks_distance(x, law)
            elif stat == "levy":
                value = gof.levy_distance(x, law)
            elif stat == "moments":
                errs = gof.moment_match(x, law, int(config.get("k", 4)))
                value = max(errs) if errs else 0.0
            else:
                raise ConfigError("statistic %s needs an eigenvalue law" % stat)
        n = vals.size
        thr = config.get("threshold", coeff / math.sqrt(n) if stat != "moments" else 0.1)
        rep = gof.GoFReport(stat, float(value), thr, bool(value <= thr), n, law.label, conv)
    out.json("report.json", json.loads(rep.to_json()))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_universality(config: dict, out: Writer, threads: int) -> int:
    spec = _function_spec(config["ensemble"])
    la, lb = (_entry_law(d) for d in config["laws"])
    seed = _need_seed(config)
    trials = int(config.get("trials", 1))
    coeff = config.get("ks_coeff", gof.KS_COEFF)
    need = config.get("min_pass_fraction", 0.95)

    def one(t):
        s = ens.trial_seed(seed, t)
        try:
            a = gof.simulate_run(spec, la, s)
            b = gof.simulate_run(spec, lb, s)
        except NumericError as exc:
            return {"trial": t, "error": str(exc)}
        rep = gof.universality_test(a, b)
        thr = coeff * math.sqrt(2.0 / rep.n)
        return {"trial": t, "value": rep.value, "threshold": thr, "pass": bool(rep.value <= thr)}

    with _pool(threads) as pool:
        rows = list(pool.map(one, range(trials)))
    done = [r for r in rows if "error" not in r]
    passed = sum(r["pass"] for r in done)
    frac = passed / len(done) if done else 0.0
    ok = bool(done) and frac >= need
    out.json(
        "universality.json",
        {
            "command": "universality",
            "laws": [la.kind, lb.kind],
            "convention": SV_CONVENTION,
            "trials": rows,
            "pass_count": passed,
            "pass_fraction": frac,
            "min_pass_fraction": need,
            "pass": ok,
            "seed": seed,
        },
    )
    if trials == 0:
        return EXIT_OK
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "law": cmd_law,
    "solve": cmd_solve,
    "compare": cmd_compare,
    "universality": cmd_universality,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freespec", description="Random matrix spectra and free probability limits.")
    p.add_argument("--version", action="version", version="freespec " + __version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", required=True, type=Path, help="JSON config file")
        c.add_argument("--out", type=Path, default=Path("."), help="output directory")
        c.add_argument("--seed", type=int, help="overrides the config seed")
        c.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        c.add_argument("--trials", type=int, help="overrides the config trial count")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("cannot load config %s: %s" % (args.config, exc)) from None
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            config["seed"] = args.seed
        if args.trials is not None:
            config["trials"] = args.trials
        validate(args.command, config)
        writer = Writer(args.out, config_hash(config))
        fn = COMMANDS[args.command]
        if fn is cmd_compare:
            return fn(config, writer, args.threads, base=args.config.parent)
        return fn(config, writer, args.threads)
    except ConfigError as exc:
        print("freespec: config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print("freespec: numeric error: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print("freespec: I/O error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except FreespecError as exc:
        print("freespec: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> None:
    sys.exit(run(argv))
