"""Command-line harness.

``dstc <command> [--config FILE] [--seed N] [--workers N] [--out DIR]``

Each command writes headered CSV files whose names carry the first twelve
hex digits of the config hash, the fully resolved config (re-runnable with
``--config``) and a JSON manifest listing the config hash, seed, version,
fabric hash and the SHA-256 of every output.  The worker count affects only
speed: it is not part of the config, and outputs are byte-identical for any
value of it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import subprocess
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, config as cfgmod
from . import experiments as ex
from . import network as nw
from .ei import DelayProfile, delay_distribution
from .energy import Variant, lateral_table_csv, scaling_csv
from .errors import (
    AddressError,
    AllocationError,
    ConfigError,
    DstcError,
    IntegrationDivergenceError,
    PreconditionError,
    SlotConflictError,
)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_CAPACITY = 4
EXIT_DIVERGENCE = 5


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _ms(x: float) -> str:
    return "" if x is None or not np.isfinite(x) else f"{x:.3f}"


# -- commands -------------------------------------------------------------------
# each returns (outputs: name -> text, fabric hash)


def cmd_characterize_delays(cfg: cfgmod.RunConfig, workers: int):
    fab = cfg.make_fabric()
    dd = delay_distribution(fab, cfg.delays.n, cfg.nominal.balance, cfg.delays.dt)
    summary = _csv([
        ["n", "n_valid", "mean_ms", "sd_ms", "skewness", "fraction_no_rebound", "low_confidence"],
        [dd.n, dd.n_valid, _ms(dd.mean), _ms(dd.sd), f"{dd.skewness:.4f}",
         f"{dd.fraction_no_rebound:.4f}", int(dd.low_confidence)],
    ])
    return {"delays.csv": dd.to_csv(), "delay_summary.csv": summary}, fab.fingerprint()


def _b2_neurons(cfg, fab, n, k):
    return [ex.build_b2(fab, k, balance=cfg.nominal.balance, forward_nominal=cfg.nominal.forward)
            for _ in range(n)]


def cmd_map_rf(cfg: cfgmod.RunConfig, workers: int):
    r = cfg.rf
    fab = cfg.make_fabric()
    neurons = _b2_neurons(cfg, fab, r.neurons, r.k)
    box = [["neuron", "address", "channel", "q1", "median", "q3", "whisker_lo", "whisker_hi", "n_accepted"]]
    acc = [["neuron", "pattern", *(f"ch{c}_ms" for c in range(r.k + 1))]]
    dly = [["neuron", "address", "channel", "exc_slot", "inh_slot", "delay_ms", "peak_time_ms", "rf_median_ms"]]
    for i, b2 in enumerate(neurons):
        rf = ex.map_receptive_field(b2, r.n_patterns, cfg.seed, cfg.dt, r.t_min, r.t_max, r.window, workers)
        for row in list(csv.reader(io.StringIO(ex.rf_report(rf))))[1:]:
            box.append([i, str(b2.address), *row])
        for row in list(csv.reader(io.StringIO(ex.accepted_csv(rf))))[1:]:
            acc.append([i, *row])
        med = rf.medians()
        for ch, (p, (e, s)) in enumerate(zip(b2.config().profiles(), b2.assignment.pairs), start=1):
            d, pk = (p.delay, p.peak_time) if isinstance(p, DelayProfile) else (None, None)
            dly.append([i, str(b2.address), ch, e, s, _ms(d), _ms(pk), _ms(-med[ch - 1])])
    return {"rf_boxplot.csv": _csv(box), "rf_accepted.csv": _csv(acc), "rf_delays.csv": _csv(dly)}, fab.fingerprint()


def cmd_tune(cfg: cfgmod.RunConfig, workers: int):
    t, r = cfg.tune, cfg.rf
    fab = cfg.make_fabric()
    b2 = _b2_neurons(cfg, fab, 1, t.k)[0]
    pa, pb = ex.tuning_patterns(b2, t_min=r.t_min, t_max=r.t_max)
    outcomes = ex.tune_feature(fab, b2, pa, pb, t.n_configs, t.trials, cfg.seed, cfg.dt, r.t_max, r.window,
                               workers, t.strict)
    lines, slots = [], [["config", "channel", "exc_slot", "inh_slot"]]
    for o in outcomes:
        if not o.success:
            continue
        again = ex.replay(fab, b2, o, pa, pb, t.trials, cfg.dt, r.t_max, r.window)
        same = again.counts_a == o.counts_a and again.counts_b == o.counts_b
        lines.append(f"{o.index}: {o.assignment.label()}  replay={'identical' if same else 'DIFFERS'}")
        slots += [[o.index, ch, e, s] for ch, (e, s) in enumerate(o.assignment.pairs, start=1)]
    pat = [["pattern", *(f"ch{c}_ms" for c in range(t.k + 1))],
           ["A", *(_ms(x) for x in pa.times)], ["B", *(_ms(x) for x in pb.times)]]
    outputs = {
        "tuning.csv": ex.tuning_csv(outcomes),
        "tuning_successes.txt": "\n".join(lines) + ("\n" if lines else ""),
        "tuning_patterns.csv": _csv(pat),
        "tuning_slots.csv": _csv(slots),
    }
    return outputs, fab.fingerprint()


def cmd_energy(cfg: cfgmod.RunConfig, workers: int):
    table = cfg.energy.table()
    outputs = {
        "energy_lateral.csv": lateral_table_csv(table),
        "energy_scaling.csv": scaling_csv(range(0, cfg.energy.k_max + 1), table),
    }
    return outputs, cfg.make_fabric().fingerprint()


def cmd_simulate(cfg: cfgmod.RunConfig, workers: int):
    s = cfg.simulate
    fab = cfg.make_fabric()
    if Variant(s.variant) is Variant.DSTC:
        net = nw.build_dstc(fab, s.columns, s.k, cfg.nominal.balance, cfg.nominal.forward, s.inhibition)
    else:
        net = nw.build_stc(fab, s.columns, s.k, forward=cfg.nominal.forward, inhibition=s.inhibition)
    res = nw.simulate(net, {int(c): list(v) for c, v in s.inputs.items()}, s.horizon, cfg.dt,
                      cfg.energy.table())
    outputs = {
        "raster.csv": res.raster_csv(),
        "ledger.csv": res.ledger.to_csv(),
        "network.txt": net.describe(),
    }
    return outputs, fab.fingerprint()


COMMANDS: dict[str, Callable] = {
    "characterize-delays": cmd_characterize_delays,
    "map-rf": cmd_map_rf,
    "tune": cmd_tune,
    "energy": cmd_energy,
    "simulate": cmd_simulate,
}


# -- driver -----------------------------------------------------------------------


def artifact_version() -> str:
    """Package version, followed by ``git describe`` when run from a checkout."""
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--tags"], cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    tag = desc.stdout.strip()
    return f"{__version__}+g{tag}" if desc.returncode == 0 and tag else __version__


def run(command: str, cfg: cfgmod.RunConfig, out: Path, workers: int = 1) -> dict:
    """Execute ``command`` and write its artifacts into ``out``; return the manifest."""
    if command not in COMMANDS:
        raise PreconditionError(f"unknown command {command!r}")
    if workers < 1:
        raise PreconditionError("--workers must be >= 1")
    h = cfg.hash()
    tag = h[:12]
    outputs, fabric_hash = COMMANDS[command](cfg, workers)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, text in outputs.items():
        stem, dot, ext = name.rpartition(".")
        fname = f"{stem}-{tag}.{ext}"
        (out / fname).write_text(text)
        written[fname] = hashlib.sha256(text.encode()).hexdigest()
    cfg_name = f"config-{tag}.toml"
    (out / cfg_name).write_text(cfg.to_toml())
    manifest = {
        "command": command,
        "config_hash": h,
        "config_file": cfg_name,
        "seed": cfg.seed,
        "version": artifact_version(),
        "fabric_hash": fabric_hash,
        "outputs": dict(sorted(written.items())),
        "rerun": f"dstc {command} --config {cfg_name}",
    }
    (out / f"manifest-{command}-{tag}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _exit_code(e: DstcError) -> tuple[int, str]:
    if isinstance(e, ConfigError):
        return EXIT_CONFIG, "config"
    if isinstance(e, (AllocationError, AddressError, SlotConflictError)):
        return EXIT_CAPACITY, "capacity"
    if isinstance(e, IntegrationDivergenceError):
        return EXIT_DIVERGENCE, "divergence"
    if isinstance(e, PreconditionError):
        return EXIT_PRECONDITION, "precondition"
    return EXIT_OTHER, "error"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dstc", description="Emulated dSTC/STC experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "characterize-delays": "E-I delay distribution of fresh elements",
        "map-rf": "receptive fields of seeded B2 neurons",
        "tune": "random synapse resampling for an A/B discrimination",
        "energy": "per-lateral-spike and fan-in scaling energy tables",
        "simulate": "run an STC or dSTC column network",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override fabric.seed")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes (default 1)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default ./out)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 1 << 64:
                raise ConfigError("--seed", "must be an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        manifest = run(args.command, cfg, args.out, args.workers)
    except DstcError as e:
        code, cat = _exit_code(e)
        print(f"dstc: {cat} error: {e}", file=sys.stderr)
        return code
    for name in manifest["outputs"]:
        print(args.out / name)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
