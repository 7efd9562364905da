"""Batch front end: ``kit3wm <subcommand> --config run.yaml --out DIR``.

Exit codes: 0 success, 2 config error, 3 data or fit error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .amplifier import (
    NoCompressionError,
    asymmetry_diagnostic,
    calibrate_pump_amplitude,
    compression_curve,
    find_phase_matched_pairs,
    gain_profile,
    pump_for_detuning,
    pump_phase_shift,
)
from .cme import CmeStepError, IntegratorControls
from .config import ConfigError, RunConfig, load_config
from .core import CellParams, DomainError, LoadingPattern, PumpDrive, quanta_to_kelvin
from .dispersion import PoleError, UnwrapError, default_frequency_grid, dispersion_relation
from .noise import (
    FitError,
    NoiseChain,
    SntjSweep,
    compare_fits,
    default_voltage_grid,
    hemt_noise_from_system,
    hemt_only_noise,
    loss_budget,
    simulate_sweep,
    system_added_noise,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MAX_FAILED_FRACTION = 0.10
TWO_PI = 2 * math.pi


class NumericalFailure(RuntimeError):
    pass


class Run:
    def __init__(self, command: str, config: RunConfig, out: Path, threads: int, seed: int):
        self.command, self.config, self.out, self.threads, self.seed = command, config, out, threads, seed
        self.written: list[Path] = []

    @property
    def meta(self) -> dict:
        return {"toolkit": "kit3wm", "version": __version__, "config_sha256": self.config.digest,
                "command": self.command, "seed": self.seed}

    def _path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(p)
        return p

    def write_csv(self, name: str, body: str):
        m = self.meta
        head = f"# {m['toolkit']} {m['version']} config_sha256={m['config_sha256']} command={m['command']} seed={m['seed']}\n"
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(head + body)

    def write_json(self, name: str, payload: dict, meta: bool = True):
        doc = dict(payload)
        if meta:
            doc["meta"] = self.meta
        with open(self._path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _line(cfg: RunConfig):
    line = cfg.require("line")
    cell = CellParams(**line["cell"])
    loading = LoadingPattern(**line["loading"]) if line.get("loading") else None
    n_cells = None if loading else line.get("n_cells")
    return cell, loading, n_cells


def _dispersion(cfg: RunConfig):
    cell, loading, n_cells = _line(cfg)
    grid = cfg.get("line.grid")
    freq = None
    if grid:
        freq = default_frequency_grid(cell, loading, grid.get("f_min_hz", 5e7), grid.get("f_max_hz", 12e9),
                                      grid.get("points", 12000))
    return dispersion_relation(cell, loading, n_cells, freq, cfg.get("line.z0", 50.0))


def _drive(cfg: RunConfig, pump_hz=None) -> PumpDrive:
    d = cfg.require("drive")
    return PumpDrive(d["dc_bias"], d["scale_current"], d["pump_amplitude"],
                     TWO_PI * (d["pump_hz"] if pump_hz is None else pump_hz))


def _controls(cfg: RunConfig) -> IntegratorControls:
    return IntegratorControls(rtol=cfg.get("sweep.rtol", 1e-9), n_samples=2)


def _signal_grid(cfg: RunConfig):
    sig = cfg.get("sweep.signal_hz")
    if sig is None:
        return None
    return TWO_PI * np.linspace(sig["start"], sig["stop"], sig["points"])


def _pumps_hz(cfg: RunConfig):
    return cfg.get("sweep.pumps_hz") or [cfg.require("drive")["pump_hz"]]


def _hz_tag(omega: float) -> str:
    return f"{omega / TWO_PI:.6e}".replace("+", "")


def cmd_dispersion(run: Run):
    table = _dispersion(run.config)
    run.write_csv("dispersion.csv", table.to_csv())
    payload = json.loads(table.to_json())
    sb = table.stopband()
    payload["stopband_hz"] = None if sb is None else [sb[0] / TWO_PI, sb[1] / TWO_PI]
    run.write_json("dispersion.json", payload)


def _check_failures(profile, label: str):
    if profile.failure_fraction > MAX_FAILED_FRACTION:
        raise NumericalFailure(
            f"{label}: {profile.failed.sum()} of {profile.failed.size} sweep points failed; first: "
            + (profile.notes[0] if profile.notes else "?")
        )


def cmd_gain_profile(run: Run):
    table = _dispersion(run.config)
    grid = _signal_grid(run.config)
    seed = run.config.get("sweep.seed_fraction", 0.01)
    failures = []
    summary = []
    for f_p in _pumps_hz(run.config):
        drive = _drive(run.config, f_p)
        prof = gain_profile(drive, table, grid, seed * drive.pump_amplitude, _controls(run.config), run.threads)
        run.write_csv(f"gain_profile_{_hz_tag(drive.pump_frequency)}.csv", prof.to_csv())
        summary.append({"pump_hz": f_p, "failed_points": int(prof.failed.sum()),
                        "max_gain_db": float(np.nanmax(prof.gain_db)) if not prof.failed.all() else None,
                        "mean_gain_db": float(np.nanmean(prof.gain_db)) if not prof.failed.all() else None})
        try:
            _check_failures(prof, f"pump {f_p:.6e} Hz")
        except NumericalFailure as exc:
            failures.append(str(exc))
    run.write_json("gain_profile.json", {"profiles": summary, "seed_fraction": seed})
    if failures:
        raise NumericalFailure("; ".join(failures))


def cmd_phase_match(run: Run):
    table = _dispersion(run.config)
    rows = ["pump_hz,signal_hz,idler_hz,detuning_hz"]
    report = []
    for f_p in _pumps_hz(run.config):
        drive = _drive(run.config, f_p)
        pairs = find_phase_matched_pairs(drive.pump_frequency, drive, table)
        for ws, wi in pairs:
            rows.append(",".join(repr(float(v)) for v in (f_p, ws / TWO_PI, wi / TWO_PI, (wi - ws) / 2 / TWO_PI)))
        report.append({"pump_hz": f_p, "detunings_hz": [(wi - ws) / 2 / TWO_PI for ws, wi in pairs]})
    run.write_csv("phase_match.csv", "\n".join(rows) + "\n")
    payload = {"pumps": report}
    targets = run.config.get("sweep.match_detunings_hz")
    if targets:
        drive = _drive(run.config)
        payload["pump_for_detuning"] = [
            {"detuning_hz": d, "pump_hz": pump_for_detuning(TWO_PI * d, drive, table) / TWO_PI} for d in targets
        ]
    run.write_json("phase_match.json", payload)


def _probe_grid(cfg: RunConfig):
    p = cfg.get("sweep.probe_dbm") or {"start": -100.0, "stop": -40.0, "step": 1.0}
    n = int(math.floor((p["stop"] - p["start"]) / p["step"] + 1e-9)) + 1
    return p["start"] + p["step"] * np.arange(n)


def cmd_compression(run: Run):
    table = _dispersion(run.config)
    drive = _drive(run.config)
    conv = run.config.get("sweep.power_convention", "half")
    z0 = run.config.get("line.z0", 50.0)
    results = []
    for det in run.config.get("sweep.detunings_hz") or [1e9]:
        for sign in (-1, 1):
            w = drive.pump_frequency / 2 + sign * TWO_PI * det
            curve = compression_curve(drive, table, w, _probe_grid(run.config), z0, conv, controls=_controls(run.config))
            tag = _hz_tag(w)
            run.write_csv(f"compression_{tag}.csv", curve.to_csv())
            with open(run._path(f"compression_{tag}.json"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(curve.summary_json() + "\n")
            results.append({"freq_hz": w / TWO_PI, "p_1db_dbm": curve.p_1db_dbm,
                            "small_signal_gain_db": curve.small_signal_gain_db})
    run.write_json("compression_summary.json", {"points": results, "power_convention": conv})


def cmd_asymmetry(run: Run):
    table = _dispersion(run.config)
    drive = _drive(run.config)
    fractions = run.config.get("sweep.seed_fractions") or [1 / 100, 1 / 12, 1 / 8, 1 / 6]
    det = (run.config.get("sweep.detunings_hz") or [1e9])[0]
    rep = asymmetry_diagnostic(drive, table, [f * drive.pump_amplitude for f in fractions], _signal_grid(run.config),
                               TWO_PI * det, _controls(run.config), run.threads)
    for frac, prof in zip(fractions, rep.profiles):
        run.write_csv(f"asymmetry_seed_{frac:.6g}.csv", prof.to_csv())
        _check_failures(prof, f"seed fraction {frac:.6g}")
    run.write_json("asymmetry.json", {
        "detuning_hz": det,
        "tilts": [{"seed_fraction": f, "seed_amplitude": s, "tilt_db": t}
                  for f, s, t in zip(fractions, rep.seeds, rep.tilts_db)],
    })


def cmd_calibrate_pump(run: Run):
    cal = run.config.require("calibration")
    d = run.config.require("drive")
    form = cal.get("form", "derived")
    amp = calibrate_pump_amplitude(cal["phase_shift_rad"], cal["n_cells"], d["dc_bias"], d["scale_current"],
                                   TWO_PI * d["pump_hz"], cal["bare_inductance"], cal["capacitance"], form)
    drive = _drive(run.config).replace(pump_amplitude=amp)
    run.write_json("calibrate_pump.json", {
        "pump_amplitude_a": amp,
        "delta_p_rad_per_cell": pump_phase_shift(drive, cal["bare_inductance"], cal["capacitance"], form),
        "form": form,
    })


def _chain(cfg: RunConfig) -> NoiseChain:
    c = cfg.require("chain")
    return NoiseChain(
        eta1_s=c["eta1_s"], eta1_i=c["eta1_i"], eta2=c["eta2"], gain=10 ** (c["gain_db"] / 10),
        hemt_gain=10 ** (c.get("hemt_gain_db", 0.0) / 10), room_gain=10 ** (c.get("room_gain_db", 0.0) / 10),
        hemt_noise=c.get("hemt_noise", 0.0), excess_s=c.get("excess_s", 0.0), excess_i=c.get("excess_i", 0.0),
    )


def cmd_noise_sim(run: Run):
    chain = _chain(run.config)
    n = run.config.require("noise")
    grid = default_voltage_grid(n.get("points", 2000), n.get("bias_current", 12e-6), n.get("junction_impedance", 54.0))
    sweep = simulate_sweep(chain, TWO_PI * n["signal_hz"], TWO_PI * n["idler_hz"], grid, n.get("temperature_k", 0.03),
                           n.get("v_offset", 0.0), n.get("sigma", 0.0), run.seed, n.get("rbw_hz", 1e6))
    run.write_csv("sweep.csv", sweep.to_csv())
    run.write_json("sweep.json", sweep.sidecar(), meta=False)
    added = system_added_noise(chain)
    run.write_json("noise_sim.json", {
        "gain_ss": chain.gain_ss, "gain_si": chain.gain_si, "n_eff_s": chain.n_eff_s, "n_eff_i": chain.n_eff_i,
        "n_sigma_exact": added.exact, "n_sigma_simplified": added.simplified, "hemt_term": added.hemt_term,
        "n_sigma_kelvin": quanta_to_kelvin(added.exact, TWO_PI * n["signal_hz"]),
    })


def cmd_noise_fit(run: Run, data_path=None, sidecar_path=None):
    n = run.config.section("noise") or {}
    csv_path = Path(data_path) if data_path else (run.config.resolve(n["input"]) if "input" in n else None)
    if csv_path is None:
        raise ConfigError("noise.input", "no sweep file given (use noise.input or --input)")
    if sidecar_path:
        side = Path(sidecar_path)
    elif "sidecar" in n and not data_path:
        side = run.config.resolve(n["sidecar"])
    else:
        side = csv_path.with_suffix(".json")
    try:
        text = csv_path.read_text(encoding="utf-8")
        meta = json.loads(side.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DomainError(f"cannot read sweep data: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DomainError(f"sidecar {side} is not valid JSON: {exc}") from None
    sweep = SntjSweep.from_csv(text, meta)
    comparison = compare_fits(sweep, n_eff_i=n.get("n_eff_i"), gain_ratio=n.get("gain_ratio"))
    run.write_json("fit.json", comparison.to_dict())
    print(comparison.report())


def cmd_loss_budget(run: Run):
    losses = run.config.require("losses")
    freqs = run.config.get("loss_frequencies") or {}
    budget = loss_budget(losses, freqs.get("signal_hz"), freqs.get("idler_hz"))
    payload = {"budget": budget.to_dict(), "kit_from_bypass_db": budget.kit_from_bypass()}
    chain_cfg = run.config.section("chain")
    if chain_cfg and "hemt_noise" in chain_cfg and budget.eta_total is not None:
        chain = NoiseChain(budget.eta1_s, budget.eta1_i, budget.eta2, 1.0, hemt_noise=chain_cfg["hemt_noise"])
        n_off = hemt_only_noise(chain.replace(eta2=budget.eta_total, eta1_s=1.0))
        payload["hemt_only"] = {"n_sigma_quanta": n_off, "eta_product": budget.eta_total,
                                "hemt_noise_recovered": hemt_noise_from_system(n_off, budget.eta_total)}
        if freqs.get("signal_hz"):
            payload["hemt_only"]["t_sigma_kelvin"] = quanta_to_kelvin(n_off, TWO_PI * freqs["signal_hz"])
    run.write_json("loss_budget.json", payload)


COMMANDS = {
    "dispersion": cmd_dispersion,
    "gain-profile": cmd_gain_profile,
    "phase-match": cmd_phase_match,
    "compression": cmd_compression,
    "asymmetry": cmd_asymmetry,
    "calibrate-pump": cmd_calibrate_pump,
    "noise-sim": cmd_noise_sim,
    "noise-fit": cmd_noise_fit,
    "loss-budget": cmd_loss_budget,
}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kit3wm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kit3wm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (default: output.directory or ./out)")
        p.add_argument("--threads", type=_positive_int, default=1, help="worker processes for sweeps")
        p.add_argument("--seed", type=_u64, default=0, help="seed for synthetic measurement noise")
        if name == "noise-fit":
            p.add_argument("--input", help="sweep CSV (overrides noise.input)")
            p.add_argument("--sidecar", help="sweep JSON sidecar (default: next to the CSV)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(cfg.get("output.directory", "out"))
    run = Run(args.command, cfg, out, args.threads, args.seed)
    try:
        if args.command == "noise-fit":
            cmd_noise_fit(run, args.input, args.sidecar)
        else:
            COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, CmeStepError, PoleError, UnwrapError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, FitError, NoCompressionError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
