"""Command line front end.

Subcommands: phantom, simulate, pick, brtt, das, pipeline, eval, plot.
Global flags --threads, --seed and --config apply before the subcommand.
Measurement data travels as .npz bundles; images travel as UCTF field
files with JSON sidecars.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .brtt import BoxConstraint, GnConfig, gn_reconstruct, slowness_to_sos
from .core import Grid2D, generate_phantom, make_ring_array
from .dasrt import ApodizationRule, das_image, deconvolve_source
from .eikonal import SlownessMap
from .errors import UctError
from .fieldio import grid_meta, read_field, read_sidecar, write_field, \
    write_sidecar
from .metrics import evaluate_image
from .pipeline import (ImagePair, PipelineConfig, SPLITS, load_pair,
                       make_phantom_spec, run_pipeline)
from .picker import TofTable, pick_all
from .plots import emit_plots, save_reflectivity_image, save_sos_image
from .wavesim import (MeasurementData, SimConfig, SourcePulse, add_noise,
                      make_pulse, simulate)


def _load_config(args) -> PipelineConfig:
    if args.config:
        return PipelineConfig.from_json(args.config)
    return PipelineConfig()


def _save_measurement(path, data: MeasurementData):
    np.savez_compressed(
        path, g=data.g, dt=data.dt, emitters=np.asarray(data.emitters),
        radius=data.array.radius, n_elements=data.array.n_elements,
        center=np.asarray(data.array.center),
        snr_db=np.nan if data.snr_db is None else data.snr_db,
        pulse=data.pulse.samples if data.pulse is not None else np.zeros(0),
        pulse_fc=data.pulse.center_frequency if data.pulse else 0.0)


def _load_measurement(path) -> MeasurementData:
    z = np.load(path)
    array = make_ring_array(float(z["radius"]), int(z["n_elements"]),
                            tuple(z["center"]))
    pulse = None
    if z["pulse"].size:
        pulse = SourcePulse(float(z["pulse_fc"]), z["pulse"], float(z["dt"]))
    snr = float(z["snr_db"])
    return MeasurementData(g=z["g"], dt=float(z["dt"]), array=array,
                           emitters=tuple(int(m) for m in z["emitters"]),
                           snr_db=None if np.isnan(snr) else snr, pulse=pulse)


def cmd_phantom(args):
    cfg = _load_config(args)
    grid = Grid2D.centered(cfg.grid_n, cfg.grid_dx)
    spec = make_phantom_spec(cfg, args.index)
    maps, labels = generate_phantom(spec, grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "sos.uctf", maps.sos.astype(np.float32))
    write_sidecar(out / "sos.uctf", grid_meta(grid, water_sos=cfg.water_sos,
                                              seed=spec.seed))
    write_field(out / "labels.uctf", labels.labels)
    write_sidecar(out / "labels.uctf", grid_meta(grid, seed=spec.seed))
    print(f"phantom seed={spec.seed} -> {out}")


def cmd_simulate(args):
    cfg = _load_config(args)
    grid = Grid2D.centered(cfg.grid_n, cfg.grid_dx)
    from .core import AcousticMaps
    if args.sos:
        sos = read_field(args.sos)
        maps = AcousticMaps(grid, sos, np.ones(grid.shape),
                            np.zeros(grid.shape), water_sos=cfg.water_sos)
    else:
        maps = AcousticMaps.homogeneous(grid, cfg.water_sos)
    array = make_ring_array(cfg.ring_radius, cfg.n_elements)
    pulse = make_pulse(cfg.center_frequency, cfg.dt)
    sim = SimConfig(dt=cfg.dt, duration=cfg.duration, lossless=cfg.lossless)
    data = simulate(maps, array, pulse, sim)
    if args.snr is not None:
        data = add_noise(data, args.snr, seed=args.seed or 0)
    _save_measurement(args.out, data)
    print(f"simulated {data.g.shape} -> {args.out}")


def cmd_pick(args):
    cfg = _load_config(args)
    data = _load_measurement(args.data)
    cutoff = min(1.5 * cfg.center_frequency, 0.45 / data.dt)
    tofs = pick_all(data, data.array, cfg.water_sos, filter_cutoff=cutoff)
    np.savez_compressed(args.out, t_obs=tofs.t_obs, valid=tofs.valid,
                        water_sos=tofs.water_sos)
    print(f"picked {int(tofs.valid.sum())} valid pairs -> {args.out}")


def cmd_brtt(args):
    cfg = _load_config(args)
    z = np.load(args.tof)
    tofs = TofTable(z["t_obs"], z["valid"], float(z["water_sos"]))
    array = make_ring_array(cfg.ring_radius, cfg.n_elements)
    lr_grid = Grid2D.centered(cfg.grid_n // cfg.brtt_factor,
                              cfg.grid_dx * cfg.brtt_factor)
    water_b = 1.0 / cfg.water_sos
    box = BoxConstraint(1.0 / cfg.sos_max, 1.0 / cfg.sos_min, (0.0, 0.0),
                        cfg.fov_radius, water_b)
    b0 = SlownessMap.uniform(lr_grid, water_b)
    b_rec, trace = gn_reconstruct(tofs, array, b0, box,
                                  GnConfig(max_outer_iters=cfg.max_outer_iters))
    write_field(args.out, slowness_to_sos(b_rec).astype(np.float32))
    write_sidecar(args.out, grid_meta(lr_grid, water_sos=cfg.water_sos,
                                      trace=trace.to_dict()))
    print(f"reconstruction {trace.status} after "
          f"{len(trace.iterations)} iterations -> {args.out}")


def cmd_das(args):
    cfg = _load_config(args)
    data = _load_measurement(args.data)
    sos = read_field(args.slowness)
    meta = read_sidecar(args.slowness)
    lr_grid = Grid2D(meta["nx"], meta["ny"], meta["dx_mm"],
                     tuple(meta["origin_mm"]))
    slowness = SlownessMap.from_sos(lr_grid, sos)
    dec = deconvolve_source(data)
    out_grid = Grid2D.centered(cfg.crop_n, cfg.grid_dx)
    img = das_image(dec, slowness, ApodizationRule(args.sigma, data.array),
                    out_grid)
    norm = float(np.max(np.abs(img.f)))
    write_field(args.out, img.f.astype(np.float32))
    write_sidecar(args.out, grid_meta(out_grid, sigma=args.sigma,
                                      norm_max_abs=norm))
    print(f"reflectivity max|f|={norm:.3e} -> {args.out}")


def cmd_pipeline(args):
    cfg = _load_config(args)
    failures = run_pipeline(cfg, args.out)
    print(f"pipeline complete, {failures} failed items -> {args.out}")
    return 1 if failures else 0


def _iter_items(root: Path):
    for split in SPLITS:
        base = root / split
        if not base.is_dir():
            continue
        for item_dir in sorted(base.iterdir()):
            if (item_dir / "meta.json").exists():
                yield split, item_dir


def cmd_eval(args):
    root = Path(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for split, item_dir in _iter_items(root):
        pair = load_pair(item_dir)
        from .core import LabelMap
        labels = LabelMap(pair.grid, pair.labels)
        rep = evaluate_image(pair.target_sos, pair.brtt_sos, pair.water_sos,
                             labels)
        row = {"split": split, "id": item_dir.name}
        row.update(rep.to_dict())
        rows.append(row)
        if args.figures:
            emit_plots(pair, out_dir / "figures", prefix=item_dir.name)
    report = {"items": rows,
              "note": "AUC, when reported, is empirical trapezoidal "
                      "with Hanley-McNeil SE"}
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if rows:
        with open(out_dir / "report.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    print(f"evaluated {len(rows)} items -> {out_dir}")


def cmd_plot(args):
    path = Path(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if path.is_dir():
        pair = load_pair(path)
        paths = emit_plots(pair, out_dir, prefix=path.name)
    else:
        arr = read_field(path)
        target = out_dir / (path.stem + ".png")
        if args.kind == "reflectivity":
            save_reflectivity_image(arr, target)
        else:
            save_sos_image(arr, target)
        paths = [target]
    print("wrote " + ", ".join(str(p) for p in paths))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uct",
                                description="virtual ring-array USCT toolkit")
    p.add_argument("--threads", type=int, default=None,
                   help="worker thread budget (default: UCT_THREADS or 1)")
    p.add_argument("--seed", type=int, default=None, help="global RNG seed")
    p.add_argument("--config", type=str, default=None,
                   help="pipeline config JSON")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("phantom", help="generate one phantom")
    q.add_argument("--index", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_phantom)

    q = sub.add_parser("simulate", help="forward-simulate measurements")
    q.add_argument("--sos", help="SOS field file (default: water bath)")
    q.add_argument("--snr", type=float, help="additive noise SNR in dB")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("pick", help="pick first-arrival times")
    q.add_argument("--data", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_pick)

    q = sub.add_parser("brtt", help="bent-ray traveltime reconstruction")
    q.add_argument("--tof", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_brtt)

    q = sub.add_parser("das", help="delay-and-sum reflectivity image")
    q.add_argument("--data", required=True)
    q.add_argument("--slowness", required=True,
                   help="SOS field file with grid sidecar")
    q.add_argument("--sigma", type=float, default=float(np.pi / 2))
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_das)

    q = sub.add_parser("pipeline", help="generate a full dataset")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_pipeline)

    q = sub.add_parser("eval", help="evaluate a dataset, emit report + figures")
    q.add_argument("--dataset", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--figures", action="store_true",
                   help="render per-item PNG panels")
    q.set_defaults(func=cmd_eval)

    q = sub.add_parser("plot", help="render field files or dataset items")
    q.add_argument("--input", required=True,
                   help="field file or dataset item directory")
    q.add_argument("--kind", choices=["sos", "reflectivity"], default="sos")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        os.environ["UCT_THREADS"] = str(args.threads)
    try:
        result = args.func(args)
    except UctError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return int(result or 0)


if __name__ == "__main__":
    sys.exit(main())
