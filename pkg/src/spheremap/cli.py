"""Command-line entry point.

Commands: project | maps | train | predict | eval | synth | gradcheck.
Configuration resolves in layers: built-in defaults, then --preset, then the
--config JSON file, then explicit flags.  Exit codes: 0 success, 2 config
error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import backend
from . import training as tr
from .counting import (count_from_density, count_from_gaussian, nms_baseline,
                       save_count_result)
from .errors import (ConfigError, DatasetTooSmall, DivergedError, EmptyInput,
                     PackingError, SphereMapError)
from .evaluation import export_report
from .geometry import center_to_origin
from .gnet import GNetConfig, GNetModel, build_model
from .meshio import MeshParseError, load_mesh
from .projection import (ProjectionConfig, crop_roi, export_png,
                         fill_holes_cubic, grid_from_smr1, grid_to_smr1,
                         normalize_input_channels, project_equirectangular,
                         read_smr1, write_smr1)
from .targetmaps import (DensityMapConfig, GaussianMapConfig, KeypointSet,
                         density_map, gaussian_map, load_annotations)

# preset values; the two full-resolution profiles differ only where
# resolution matters
_COMMON = {
    "h_min": 0.235,
    "h_max": 0.765,
    "p_t": 0.33,
    "f": 10.0,
    "k_neighbors": 3,
    "target_mode": "gaussian_adaptive",
    "batch_size": 4,
    "max_epochs": 100,
    "base_width": 64,
    "upsample_mode": "transpose_dilated",
    "lr": None,  # per-mode default: 1e-6 gaussian, 1e-5 density
    "augment": True,
    "split_fraction": 0.8,
    "val_fraction": 0.1,
    "min_cluster_size": 1,
    "seed": 0,
}

PRESETS = {
    "paper-delta-0.5": {**_COMMON, "delta": 0.5, "sigma": 2.5, "beta": 5.0},
    "paper-delta-1.0": {**_COMMON, "delta": 1.0, "sigma": 1.25, "beta": 2.5},
    # small-model profile for CPU-bound runs
    "desk": {**_COMMON, "delta": 1.0, "sigma": 1.25, "beta": 2.5,
             "base_width": 8, "lr": 1e-3, "max_epochs": 100},
}

_KNOWN_KEYS = set(PRESETS["desk"]) | {"loss", "plateau_patience",
                                      "plateau_min_delta", "batchnorm",
                                      "circular_width"}


def resolve_config(preset: str | None, config_path: str | None,
                   overrides: dict) -> dict:
    cfg = dict(PRESETS["paper-delta-1.0"])
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; "
                              f"choose from {sorted(PRESETS)}")
        cfg = dict(PRESETS[preset])
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _proj_cfg(cfg: dict) -> ProjectionConfig:
    return ProjectionConfig(delta=cfg["delta"], h_min=cfg["h_min"],
                            h_max=cfg["h_max"])


def _gauss_cfg(cfg: dict, mode: str) -> GaussianMapConfig:
    return GaussianMapConfig(mode=mode, sigma=cfg["sigma"], p_t=cfg["p_t"],
                             beta=cfg["beta"])


def _density_cfg(cfg: dict) -> DensityMapConfig:
    return DensityMapConfig(k_neighbors=cfg["k_neighbors"], f=cfg["f"],
                            sigma_fallback=cfg["sigma"])


def _train_cfg(cfg: dict) -> tr.TrainConfig:
    kwargs = dict(
        target_mode=cfg["target_mode"], lr=cfg["lr"],
        batch_size=cfg["batch_size"], max_epochs=cfg["max_epochs"],
        augment=cfg["augment"], seed=cfg["seed"],
        split_fraction=cfg["split_fraction"], val_fraction=cfg["val_fraction"])
    for key in ("loss", "plateau_patience", "plateau_min_delta"):
        if key in cfg:
            kwargs[key] = cfg[key]
    return tr.TrainConfig(**kwargs)


def _gnet_cfg(cfg: dict) -> GNetConfig:
    kwargs = dict(base_width=cfg["base_width"],
                  upsample_mode=cfg["upsample_mode"])
    for key in ("batchnorm", "circular_width"):
        if key in cfg:
            kwargs[key] = cfg[key]
    return GNetConfig(**kwargs)


# ---------------------------------------------------------------------------
# dataset loading (NNN.ply + NNN.json pairs)


def load_dataset_dir(dataset_dir, cfg: dict) -> list[tr.Sample]:
    root = Path(dataset_dir)
    plys = sorted(root.glob("[0-9]*.ply"))
    if not plys:
        raise EmptyInput(f"no NNN.ply files in {root}")
    proj = _proj_cfg(cfg)
    samples = []
    for ply in plys:
        ann = ply.with_suffix(".json")
        if not ann.exists():
            raise EmptyInput(f"missing annotation {ann}")
        cloud = load_mesh(ply)
        kps, delta = load_annotations(ann)
        if delta != proj.delta:
            raise ConfigError(
                f"{ann}: annotation delta {delta} != configured {proj.delta}")
        samples.append(tr.build_sample(
            cloud, proj, kps, cfg["target_mode"],
            _gauss_cfg(cfg, "adaptive" if "adaptive" in cfg["target_mode"]
                       else "fixed"),
            _density_cfg(cfg)))
    return samples


# ---------------------------------------------------------------------------
# commands


def cmd_project(args, cfg):
    proj = _proj_cfg(cfg)
    cloud = center_to_origin(load_mesh(args.mesh))
    grid = crop_roi(fill_holes_cubic(project_equirectangular(cloud, proj)), proj)
    out = Path(args.out or "raster.smr1")
    if out.is_dir():
        out = out / (Path(args.mesh).stem + ".smr1")
    grid_to_smr1(out, grid)
    if args.png:
        export_png(out.with_suffix(".png"), grid.rho)
    print(f"wrote {out} ({grid.data.shape[1]}x{grid.data.shape[2]}, "
          f"{grid.data.shape[0]} channels)")
    return 0


def cmd_maps(args, cfg):
    kps, delta = load_annotations(args.annotations)
    if delta != cfg["delta"]:
        raise ConfigError(f"annotation delta {delta} != configured {cfg['delta']}")
    out = Path(args.out or "maps")
    out.mkdir(parents=True, exist_ok=True)
    maps = {
        "gaussian_fixed": gaussian_map(kps, _gauss_cfg(cfg, "fixed")).values,
        "gaussian_adaptive": gaussian_map(kps, _gauss_cfg(cfg, "adaptive")).values,
        "density": density_map(kps, _density_cfg(cfg)).values,
    }
    for name, values in maps.items():
        write_smr1(out / f"{name}.smr1", values[None], [name])
        if args.png:
            export_png(out / f"{name}.png", values)
    print(f"wrote {len(maps)} target maps to {out}")
    return 0


def cmd_train(args, cfg):
    samples = load_dataset_dir(args.dataset, cfg)
    tcfg = _train_cfg(cfg)
    train_all, test = tr.split_dataset(samples, tcfg)
    n_val = max(1, int(round(tcfg.val_fraction * len(train_all))))
    if len(train_all) - n_val < 1:
        raise DatasetTooSmall("not enough samples to carve a validation set")
    val, train_set = train_all[:n_val], train_all[n_val:]
    model = build_model(_gnet_cfg(cfg), seed=cfg["seed"])
    run_dir = Path(args.out or "run")
    best, history = tr.train(train_set, val, model, tcfg, run_dir=run_dir,
                             log=print if args.verbose else None)
    model.save(run_dir / "model.smw1")
    (run_dir / "run.json").write_text(json.dumps(
        {**cfg, "n_train": len(train_set), "n_val": len(val),
         "n_test": len(test), "best_epoch": best.epoch,
         "best_val_loss": best.best_val_loss}, indent=1))
    print(f"trained {len(history)} epochs; best val loss "
          f"{best.best_val_loss:.6f} at epoch {best.epoch}; run dir {run_dir}")
    return 0


def _load_run_model(run_dir):
    run_dir = Path(run_dir)
    model = GNetModel.load(run_dir / "model.smw1")
    run_cfg = json.loads((run_dir / "run.json").read_text())
    return model, run_cfg


def cmd_predict(args, cfg):
    model, run_cfg = _load_run_model(args.run)
    data, _names = read_smr1(args.raster)
    grid_like = np.clip((data[:3] + 1.0) / 2.0, 0.0, 1.0)
    pred = tr.predict(model, grid_like.astype(np.float32))
    mode = run_cfg["target_mode"]
    if mode == "density":
        result = count_from_density(pred)
    else:
        result = count_from_gaussian(pred, p_t=run_cfg["p_t"],
                                     min_cluster_size=run_cfg["min_cluster_size"])
    out = Path(args.out or "count.json")
    save_count_result(out, result)
    if args.png:
        export_png(out.with_suffix(".png"), pred)
    print(f"count {result.count:g} ({result.method}) -> {out}")
    return 0


def _method_name(mode: str) -> str:
    return {"gaussian_fixed": "gnet", "gaussian_adaptive": "gnet_a",
            "density": "density"}[mode]


def cmd_eval(args, cfg):
    model, run_cfg = _load_run_model(args.run)
    eval_cfg = {**cfg, "target_mode": run_cfg["target_mode"]}
    samples = load_dataset_dir(args.test_dir, eval_cfg)
    mode = run_cfg["target_mode"]
    results = {_method_name(mode): [], "nms": []}
    for s in samples:
        gt = float(len(s.keypoints))
        pred = tr.predict(model, s.input)
        if mode == "density":
            got = count_from_density(pred).count
        else:
            got = count_from_gaussian(pred, p_t=run_cfg["p_t"]).count
        results[_method_name(mode)].append((gt, got))
        # baseline works off the raw raster channels; rho sits in channel 3
    proj = _proj_cfg(eval_cfg)
    from .projection import RasterGrid
    for s, ply in zip(samples, sorted(Path(args.test_dir).glob("[0-9]*.ply"))):
        cloud = load_mesh(ply)
        grid = crop_roi(fill_holes_cubic(project_equirectangular(cloud, proj)), proj)
        got = nms_baseline(grid, beta=eval_cfg["beta"]).count
        results["nms"].append((float(len(s.keypoints)), got))
    out = Path(args.out or "report")
    paths = export_report(results, out)
    print(f"wrote report CSVs to {out}: {sorted(p.name for p in paths.values())}")
    return 0


def cmd_synth(args, cfg):
    from .synthbench import generate_dataset, write_dataset
    ranges = None
    if args.ranges:
        ranges = {k: tuple(v) for k, v in json.loads(Path(args.ranges).read_text()).items()}
    samples, manifest = generate_dataset(args.n, ranges, seed=cfg["seed"])
    out = Path(args.out or "dataset")
    write_dataset(samples, manifest, out, _proj_cfg(cfg))
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def cmd_gradcheck(args, cfg):
    from .gradcheck import run_gradcheck
    rows, ok = run_gradcheck(seed=cfg["seed"])
    width = max(len(r[0]) for r in rows)
    for name, err, passed in rows:
        print(f"{name:<{width}}  {err:12.3e}  {'pass' if passed else 'FAIL'}")
    if not ok:
        print("gradcheck FAILED")
        return 4
    print("gradcheck passed")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spheremap",
        description="Surface feature counting on spheroid-like point clouds.")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--preset", help=f"one of {sorted(PRESETS)}")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", help="output file or directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="mesh -> hole-filled ROI raster (SMR1)")
    p.add_argument("mesh")
    p.add_argument("--png", action="store_true")

    p = sub.add_parser("maps", help="annotations -> target map rasters")
    p.add_argument("annotations")
    p.add_argument("--png", action="store_true")

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("dataset")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("predict", help="run a trained model on an SMR1 raster")
    p.add_argument("raster")
    p.add_argument("--run", required=True, help="training run directory")
    p.add_argument("--png", action="store_true")

    p = sub.add_parser("eval", help="evaluate a run on a test dataset")
    p.add_argument("test_dir")
    p.add_argument("--run", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--ranges", help="JSON file of parameter ranges")

    sub.add_parser("gradcheck", help="finite-difference check of all ops")
    return parser


_COMMANDS = {
    "project": cmd_project,
    "maps": cmd_maps,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    backend.apply_thread_cap()
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.preset, args.config, {"seed": args.seed})
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, MeshParseError, EmptyInput, DatasetTooSmall,
            PackingError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (DivergedError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except SphereMapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
