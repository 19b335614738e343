"""Command-line front end: ``nestedlat {build,simulate,goodness,count-points}``.

Each run reads one JSON config. Flags may override its top-level scalars.
The run writes its output file plus ``<out>.manifest.json`` with the
config snapshot, the overrides and a sha256 of the output bytes.
"""
import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .construction import (EnsembleSpec, NestedPair, build_chain, build_pair, check_nesting)
from .errors import BudgetExceeded, ConfigInvalid, NestedLatticeError, UnknownCheck
from .goodness import (NoiseSampler, dither, ensemble_nsm_sweep, exceedance_test,
                       impersonation_probability, mixture, pe_vs_vnr_sweep)
from .lattice import DEFAULT_BUDGET, count_integer_points_in_ball, grid_sphere_bounds
from .modlambda import CSV_COLUMNS, ModLambdaConfig, csv_row, run_simulation
from .rng import substream

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4

SPEC_KEYS = {"n", "snr", "k", "k1", "epsilon1", "p_override"}
COMMON = {"seed": 0, "threads": 1, "budget": DEFAULT_BUDGET}

SCHEMAS = {
    "build": dict(COMMON, n=None, snr=None, k=None, k1=None, epsilon1=0.0, p_override=None,
                  calibrate=False, calibration_samples=20000, row_counts=None, p=None),
    "simulate": dict(COMMON, n=None, snr=None, k=None, k1=None, epsilon1=0.0, p_override=None,
                     calibrate=False, calibration_samples=20000, pair_file=None,
                     alpha="mmse", sigma_z=1.0, noise_kind="gaussian", trials=10000,
                     power_reference="calibrated"),
    "goodness": dict(COMMON, check=None, spec=None, members=10, samples=10000, noise=None,
                     deltas=[0.1], trials=10000, vnr_grid=None, rho=0.1, pair_file=None),
    "count-points": dict(COMMON, n=None, centers=None, random_centers=0, radii=None),
}

CHECKS = ("nsm", "ergodicity", "pe_vnr", "impersonation")


@dataclass
class ExperimentConfig:
    """Validated parameters of one command; missing keys take schema defaults."""

    command: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in SCHEMAS:
            raise ConfigInvalid(f"unknown command {self.command!r}")
        schema = SCHEMAS[self.command]
        unknown = sorted(set(self.params) - set(schema))
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {', '.join(unknown)}")
        merged = dict(schema)
        merged.update(self.params)
        self.params = merged
        seed = self.params["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            raise ConfigInvalid("seed must be an unsigned 64-bit integer")
        if int(self.params["threads"]) < 1:
            raise ConfigInvalid("threads must be >= 1")

    def __getitem__(self, key):
        return self.params[key]

    def to_json(self):
        return json.dumps({"command": self.command, "params": self.params}, sort_keys=True)

    @classmethod
    def from_json(cls, s):
        d = json.loads(s)
        return cls(d["command"], d["params"])


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _spec(d):
    missing = [k for k in ("n", "snr", "k") if d.get(k) is None]
    if missing:
        raise ConfigInvalid(f"missing ensemble keys: {', '.join(missing)}")
    extra = set(d) - SPEC_KEYS
    if extra:
        raise ConfigInvalid(f"unknown ensemble keys: {', '.join(sorted(extra))}")
    try:
        return EnsembleSpec(**{k: v for k, v in d.items() if v is not None})
    except TypeError as e:
        raise ConfigInvalid(str(e)) from None


def _write_csv(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: _fmt(r[c]) for c in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


# --- commands --------------------------------------------------------------

def cmd_build(cfg):
    c = cfg.params
    seed = c["seed"]
    if c["row_counts"] is not None:
        if c["n"] is None or c["snr"] is None or c["p"] is None:
            raise ConfigInvalid("a chain needs n, snr, p and row_counts")
        chain = build_chain(c["n"], c["snr"], c["row_counts"], c["p"], seed)
        return json.dumps({"chain": chain.to_dict()}, sort_keys=True) + "\n"
    spec = _spec({k: c[k] for k in SPEC_KEYS})
    pair = build_pair(spec, seed, calibrate=c["calibrate"],
                      calibration_samples=c["calibration_samples"])
    doc = {"pair": pair.to_dict(), "full_rank": pair.full_rank,
           "p_overridden": spec.p_overridden}
    return json.dumps(doc, sort_keys=True) + "\n"


def load_pair(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"bad pair file: {e}") from None
    if "pair" not in doc:
        raise ConfigInvalid("pair file holds no pair")
    pair = NestedPair.from_dict(doc["pair"])
    if not check_nesting(pair.coarse, pair.fine):
        raise ConfigInvalid("pair file fails the nesting check")
    return pair


def _pairs_for(c):
    """(snr, pair) cells in grid order: snr outer, k inner."""
    if c["pair_file"] is not None:
        pair = load_pair(c["pair_file"])
        snr = pair.spec.snr if c["snr"] is None and pair.spec else c["snr"]
        if snr is None:
            raise ConfigInvalid("snr is required with a pair file lacking a spec")
        return [(float(s), pair) for s in _as_list(snr)]
    cells = []
    for snr in _as_list(c["snr"]):
        for k in _as_list(c["k"]):
            spec = _spec({"n": c["n"], "snr": snr, "k": k, "k1": c["k1"],
                          "epsilon1": c["epsilon1"], "p_override": c["p_override"]})
            cells.append((float(snr), build_pair(spec, c["seed"], calibrate=c["calibrate"],
                                                 calibration_samples=c["calibration_samples"])))
    return cells


def cmd_simulate(cfg):
    c = cfg.params
    rows = []
    for snr, pair in _pairs_for(c):
        for alpha in _as_list(c["alpha"]):
            mc = ModLambdaConfig(pair, snr, alpha=alpha, noise_kind=c["noise_kind"],
                                 sigma_z=float(c["sigma_z"]), trials=int(c["trials"]),
                                 seed=c["seed"], threads=int(c["threads"]), budget=c["budget"],
                                 power_reference=c["power_reference"])
            rows.append(csv_row(mc, run_simulation(mc)))
    return _write_csv(rows, CSV_COLUMNS)


def sampler_from_config(d, seed):
    """Noise sampler from a JSON description.

    ``{"kind": "gaussian-iid", "n": 64, "variance": 1}``, ``uniform-iid`` alike,
    ``{"kind": "voronoi-dither", "spec": {...}}`` (coarse lattice of a built pair)
    and ``{"kind": "mixture", "components": [{"weight": a, ...}, ...]}``.
    """
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigInvalid("noise must be an object with a kind")
    kind = d["kind"]
    if kind in ("gaussian-iid", "uniform-iid"):
        if set(d) - {"kind", "n", "variance", "weight"}:
            raise ConfigInvalid(f"unknown noise keys in {d}")
        default = 1.0 if kind == "gaussian-iid" else 1.0 / 12
        return NoiseSampler(kind, int(d["n"]), float(d.get("variance", default)))
    if kind == "voronoi-dither":
        if set(d) - {"kind", "spec", "weight", "member"}:
            raise ConfigInvalid(f"unknown noise keys in {d}")
        member = int(d.get("member", 0))
        pair = build_pair(_spec(d["spec"]), int(substream(seed, "dither-lattice", member)
                                                 .integers(0, 2 ** 63 - 1)))
        return dither(pair.coarse)
    if kind == "mixture":
        comps = d.get("components") or []
        if not comps:
            raise ConfigInvalid("mixture needs components")
        return mixture(*[(float(x.get("weight", 1.0)), sampler_from_config(x, seed))
                         for x in comps])
    raise ConfigInvalid(f"unknown noise kind {kind!r}")


def cmd_goodness(cfg):
    c = cfg.params
    check, seed, threads, budget = c["check"], c["seed"], int(c["threads"]), c["budget"]
    if check not in CHECKS:
        raise UnknownCheck(check)
    if check == "nsm":
        if c["spec"] is None:
            raise ConfigInvalid("check=nsm needs spec")
        rep = ensemble_nsm_sweep(_spec(c["spec"]), int(c["members"]), int(c["samples"]), seed,
                                 threads, budget)
        rows = [{"member": i, "member_seed": s, "full_rank": fr,
                 "nsm": None if e is None else e.mean,
                 "half_width": None if e is None else e.half_width_95}
                for i, (s, fr, e) in enumerate(zip(rep.member_seeds, rep.full_rank, rep.nsm))]
        return _write_csv(rows, ("member", "member_seed", "full_rank", "nsm", "half_width"))
    if check == "ergodicity":
        samp = sampler_from_config(c["noise"], seed)
        rows = []
        for delta in _as_list(c["deltas"]):
            e = exceedance_test(samp, float(delta), int(c["trials"]), seed, threads)
            lo, hi = e.ci95
            rows.append({"kind": samp.kind, "n": e.n, "delta": e.delta, "sigma2_z": e.sigma2_z,
                         "threshold": e.threshold, "trials": e.trials, "exceed": e.exceed,
                         "p_hat": e.p_hat, "ci_lo": lo, "ci_hi": hi})
        return _write_csv(rows, ("kind", "n", "delta", "sigma2_z", "threshold", "trials",
                                 "exceed", "p_hat", "ci_lo", "ci_hi"))
    pair = _pair_for_goodness(c)
    if check == "pe_vnr":
        samp = (NoiseSampler("gaussian-iid", pair.n) if c["noise"] is None
                else sampler_from_config(c["noise"], seed))
        if c["vnr_grid"] is None:
            raise ConfigInvalid("check=pe_vnr needs vnr_grid")
        rows = pe_vs_vnr_sweep(pair, samp, [float(v) for v in c["vnr_grid"]], int(c["trials"]),
                               seed, budget, threads)
        return _write_csv(rows, ("vnr", "sigma2_z", "log2_volume_fine", "trials", "errors",
                                 "p_hat", "ci_lo", "ci_hi"))
    samp = (NoiseSampler("gaussian-iid", pair.n) if c["noise"] is None
            else sampler_from_config(c["noise"], seed))
    est = impersonation_probability(pair.fine, samp, float(c["rho"]), int(c["trials"]), seed,
                                    budget, threads)
    lo, hi = est.ci95
    return _write_csv([{"rho": float(c["rho"]), "sigma2_z": samp.sigma2, "trials": est.trials,
                        "hits": est.errors, "p_hat": est.p_hat, "ci_lo": lo, "ci_hi": hi}],
                      ("rho", "sigma2_z", "trials", "hits", "p_hat", "ci_lo", "ci_hi"))


def _pair_for_goodness(c):
    if c["pair_file"] is not None:
        return load_pair(c["pair_file"])
    if c["spec"] is None:
        raise ConfigInvalid(f"check={c['check']} needs spec or pair_file")
    return build_pair(_spec(c["spec"]), c["seed"])


def cmd_count_points(cfg):
    c = cfg.params
    n = c["n"]
    if n is None or c["radii"] is None:
        raise ConfigInvalid("count-points needs n and radii")
    centers = [np.asarray(s, dtype=float) for s in (c["centers"] or [])]
    if any(s.shape != (n,) for s in centers):
        raise ConfigInvalid("every center must have n coordinates")
    rng = substream(c["seed"], "centers")
    centers += list(rng.uniform(-5, 5, size=(int(c["random_centers"]), n)))
    rows = []
    for i, s in enumerate(centers):
        for r in c["radii"]:
            r = float(r)
            cnt = count_integer_points_in_ball(s, r, c["budget"])
            lo, hi = grid_sphere_bounds(r, n)
            rows.append({"n": n, "center": " ".join(repr(float(x)) for x in s), "r": r,
                         "count": cnt, "lower": lo, "upper": hi,
                         "violation": not lo <= cnt <= hi})
    return _write_csv(rows, ("n", "center", "r", "count", "lower", "upper", "violation"))


COMMANDS = {"build": cmd_build, "simulate": cmd_simulate, "goodness": cmd_goodness,
            "count-points": cmd_count_points}


# --- driver ----------------------------------------------------------------

def parser():
    ap = argparse.ArgumentParser(prog="nestedlat")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--budget", type=int)
    return ap


def run(command, raw, out, overrides):
    cfg = ExperimentConfig(command, {**raw, **overrides})
    text = COMMANDS[command](cfg)
    data = text.encode()
    with open(out, "wb") as f:
        f.write(data)
    manifest = {"command": command, "config": raw, "overrides": overrides,
                "resolved": cfg.params, "version": __version__,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                "output": out, "sha256": hashlib.sha256(data).hexdigest()}
    with open(out + ".manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def main(argv=None):
    args = parser().parse_args(argv)
    try:
        with open(args.config) as f:
            raw = json.load(f)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as e:
        print(f"config-invalid: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(raw, dict):
        print("config-invalid: config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG
    overrides = {k: getattr(args, k) for k in ("seed", "threads", "budget")
                 if getattr(args, k) is not None}
    try:
        run(args.command, raw, args.out, overrides)
    except BudgetExceeded as e:
        print(f"budget-exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except UnknownCheck as e:
        print(f"unknown-check: {e.token}", file=sys.stderr)
        return EXIT_CONFIG
    except (NestedLatticeError, ValueError, TypeError, KeyError) as e:
        print(f"config-invalid: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"io-error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
