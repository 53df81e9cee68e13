"""Command-line front end: field sampling, campaigns and the sensitivity study.

Every command reads one JSON configuration (or a manifest written by a previous
run), writes CSV files with 17 significant digits and a ``manifest.json`` that
echoes the resolved configuration and the checksum of each output.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .maxent import VOIGT, MatrixFieldParams, MeanElasticity, default_shear_moduli, orthotropic_mean, upper_triangle
from .mc import DEFAULT_ETA, CampaignConfig, CampaignResult, prob_band, realize_field, run_campaign
from .spectral import SpectrumDistribution

__all__ = [
    "DEFAULT_CONFIG",
    "OUT_ENV",
    "CSV_SCHEMA",
    "ConfigError",
    "load_config",
    "resolve_config",
    "campaign_config",
    "derived_quantities",
    "cmd_sample_field",
    "cmd_homogenize",
    "cmd_study",
    "cmd_validate_config",
    "main",
]

log = logging.getLogger(__name__)

OUT_ENV = "STOCHHOMOG_OUT"
CSV_SCHEMA = 1
STUDY_ETA = (0.02, 0.04, 0.08)

# Lengths are in units of the cell edge, moduli in Pa.
DEFAULT_CONFIG: dict = {
    "seed": 0,
    "kappa_sim": 200,
    "mesh_n": 10,
    "nu_s": 8,
    "spectrum": {"Lc_mean": 0.2, "delta_Lc": 0.0, "deltas": [0.0, 0.0, 0.0]},
    "matrix": {"delta_c": 0.4, "epsilon": 1e-3},
    "material": {
        "E1": 1e10, "E2": 0.5e10, "E3": 0.1e10,
        "nu23": 0.25, "nu31": 0.15, "nu12": 0.1,
        "G23": None, "G31": None, "G12": None,
        "C_bar": None,
    },
    "eta": None,
    "solver": {"method": "auto", "rtol": 1e-9},
    "sample_field": {"points": [2, 2, 2], "kappa": 1},
    "study": {"Lc_mean": [0.2, 0.4, 0.6], "delta_unc": [0.0, 0.2, 0.3, 0.4]},
}

VOIGT_NAMES = [f"C{i + 1}{j + 1}" for i in range(6) for j in range(i, 6)]
LAMBDA_NAMES = [f"lambda{k}" for k in range(1, 7)]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def _read_raw(path) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    if "config" in raw and "tool" in raw:
        raw = raw["config"]
    return raw


def load_config(path) -> dict:
    """Read a JSON configuration, or the configuration echoed in a run manifest."""
    return resolve_config(_read_raw(path))


def resolve_config(raw: dict | None = None, **overrides) -> dict:
    """Fill defaults, apply non-None `overrides` (top-level keys) and validate."""
    cfg = _merge(DEFAULT_CONFIG, raw or {})
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    campaign_config(cfg)
    pts = cfg["sample_field"]["points"]
    if len(pts) != 3 or any(int(p) != p or p < 1 for p in pts):
        raise ConfigError("sample_field.points must be three positive integers")
    if int(cfg["sample_field"]["kappa"]) < 1:
        raise ConfigError("sample_field.kappa must be >= 1")
    return cfg


def _mean(cfg: dict) -> MeanElasticity:
    mat = cfg["material"]
    if mat.get("C_bar") is not None:
        return MeanElasticity.from_matrix(np.asarray(mat["C_bar"], dtype=float), meta={"source": "matrix"})
    keys = ("E1", "E2", "E3", "nu23", "nu31", "nu12", "G23", "G31", "G12")
    return orthotropic_mean(*(mat[k] for k in keys))


def campaign_config(cfg: dict, workers: int = 1) -> CampaignConfig:
    """Typed campaign configuration; raises :class:`ConfigError` on invalid input."""
    try:
        sp = cfg["spectrum"]
        eta = DEFAULT_ETA if cfg["eta"] is None else tuple(float(e) for e in cfg["eta"])
        return CampaignConfig(
            kappa_sim=int(cfg["kappa_sim"]),
            mesh_n=int(cfg["mesh_n"]),
            seed=int(cfg["seed"]),
            spectrum=SpectrumDistribution(float(sp["Lc_mean"]), float(sp["delta_Lc"]), tuple(sp["deltas"])),
            mfp=MatrixFieldParams(float(cfg["matrix"]["delta_c"]), float(cfg["matrix"]["epsilon"])),
            mean=_mean(cfg),
            nu_s=int(cfg["nu_s"]),
            eta=eta,
            solver=cfg["solver"]["method"],
            rtol=float(cfg["solver"]["rtol"]),
            workers=workers,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def derived_quantities(cfg: dict) -> dict:
    cc = campaign_config(cfg)
    mat = cfg["material"]
    out = {
        "sigma_c": cc.mfp.sigma_c,
        "alpha": cc.mfp.alpha.tolist(),
        "c0": cc.mean.c0,
        "c1": cc.mean.c1,
        "c_eps": cc.mean.c_eps(cc.mfp.epsilon),
        "delta_s": cc.spectrum.delta_s,
        "w_min": cc.spectrum.w_min,
        "w_max": cc.spectrum.w_max,
        "C_bar": cc.mean.C_bar.tolist(),
        "voigt_order": [[i + 1, j + 1] for i, j in VOIGT],
    }
    if mat.get("C_bar") is None:
        defaults = default_shear_moduli(*(mat[k] for k in ("E1", "E2", "E3", "nu23", "nu31", "nu12")))
        out["shear_moduli"] = {
            k: (mat[k] if mat[k] is not None else g) for k, g in zip(("G23", "G31", "G12"), defaults)
        }
    return out


def _write_csv(path: Path, header: list[str], rows) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0:
        rows = rows.reshape(0, len(header))
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, cfg: dict, files: list[Path], started: str, extra=None) -> Path:
    manifest = {
        "tool": "stochhomog",
        "version": __version__,
        "command": command,
        "csv_schema": CSV_SCHEMA,
        "seed": int(cfg["seed"]),
        "config": cfg,
        "derived": derived_quantities(cfg),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in files},
    }
    manifest.update(extra or {})
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def cmd_sample_field(cfg: dict, out) -> Path:
    """Evaluate one realization of the elasticity field on a cell-centered point grid.

    Writes ``field.csv`` with columns ``x1, x2, x3``, the 21 upper-triangle
    entries and the smallest eigenvalue.
    """
    started = _now()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cc = campaign_config(cfg)
    kappa = int(cfg["sample_field"]["kappa"])
    axes = [(np.arange(p) + 0.5) / p for p in cfg["sample_field"]["points"]]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    field = realize_field(cc, kappa)
    C = field(X)
    lam_min = np.linalg.eigvalsh(C)[:, 0]
    path = out / "field.csv"
    _write_csv(path, ["x1", "x2", "x3", *VOIGT_NAMES, "lambda_min"], np.column_stack([X, upper_triangle(C), lam_min]))
    _write_manifest(out, "sample-field", cfg, [path], started, {"kappa": kappa})
    return path


def _write_campaign(out: Path, res: CampaignResult) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    rec = [[r.kappa, *upper_triangle(r.C_eff), *r.lam] for r in res.records]
    files.append(out / "records.csv")
    _write_csv(files[-1], ["kappa", *VOIGT_NAMES, *LAMBDA_NAMES], rec)
    files.append(out / "conv.csv")
    _write_csv(files[-1], ["kappa", "conv"], np.column_stack([[r.kappa for r in res.records], res.conv]))
    files.append(out / "pdf.csv")
    _write_csv(files[-1], ["lambda1_grid", "density"], np.column_stack([res.pdf_grid, res.pdf]))
    files.append(out / "peta.csv")
    _write_csv(files[-1], ["eta", "P"], np.column_stack([res.eta, res.p_eta]))
    return files


def _campaign_summary(res: CampaignResult) -> dict:
    return {
        "kappa_sim": res.config.kappa_sim,
        "n_effective": res.n_effective,
        "failures": [{"kappa": k, "reason": why} for k, why in res.failures],
        "mean_lambda1": res.mean_lambda1,
    }


def cmd_homogenize(cfg: dict, out, workers: int = 1) -> CampaignResult:
    """Run one campaign and write ``records.csv``, ``conv.csv``, ``pdf.csv``, ``peta.csv``."""
    started = _now()
    out = Path(out)
    res = run_campaign(campaign_config(cfg, workers=workers))
    files = _write_campaign(out, res)
    _write_manifest(out, "homogenize", cfg, files, started, {"campaign": _campaign_summary(res)})
    return res


def _cell_dir(Lc: float, d: float) -> str:
    return f"Lc{Lc:g}_delta{d:g}"


def cmd_study(cfg: dict, out, workers: int = 1) -> np.ndarray:
    """One campaign per (mean correlation length, uncertainty level) cell.

    Within a cell the correlation-length dispersion and the three spectrum-shape
    levels are all set to the cell's uncertainty level. Writes ``study.csv`` with
    one row per cell and each campaign under ``cells/``.
    """
    started = _now()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows, files, cells = [], [], []
    for Lc in cfg["study"]["Lc_mean"]:
        for d in cfg["study"]["delta_unc"]:
            sub = copy.deepcopy(cfg)
            sub["spectrum"] = {"Lc_mean": float(Lc), "delta_Lc": float(d), "deltas": [float(d)] * 3}
            log.info("study cell Lc=%g delta=%g", Lc, d)
            cell_out = out / "cells" / _cell_dir(Lc, d)
            res = cmd_homogenize(resolve_config(sub), cell_out, workers=workers)
            rows.append([Lc, d, res.mean_lambda1, *(prob_band(res.lambda1_normalized, e) for e in STUDY_ETA)])
            files.extend(sorted(cell_out.glob("*.csv")))
            cells.append({"Lc_mean": Lc, "delta_unc": d, **_campaign_summary(res)})
    path = out / "study.csv"
    _write_csv(path, ["Lc_mean", "delta_unc", "mean_lambda1", "P_0.02", "P_0.04", "P_0.08"], rows)
    _write_manifest(out, "study", cfg, [path, *files], started, {"cells": cells})
    return np.asarray(rows, dtype=float)


def cmd_validate_config(cfg: dict) -> dict:
    """Resolved configuration with its derived constants."""
    return {"config": cfg, "derived": derived_quantities(cfg)}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration or manifest.json of a previous run")
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./stochhomog-out)")
    common.add_argument("--seed", type=int, help="master seed, overrides the configuration")
    common.add_argument("--threads", type=int, default=1, help="worker processes for realizations")
    common.add_argument("--mesh", type=int, help="elements per cell edge, overrides mesh_n")
    common.add_argument("--kappa", type=int,
                        help="number of realizations (sample-field: index of the realization)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="stochhomog", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sample-field", parents=[common], help="evaluate one field realization on a point grid")
    sub.add_parser("homogenize", parents=[common], help="run a Monte Carlo campaign")
    sub.add_parser("study", parents=[common], help="run the correlation-length/uncertainty sensitivity grid")
    sub.add_parser("validate-config", parents=[common], help="check a configuration and print derived constants")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        raw = {} if args.config is None else _read_raw(args.config)
        over = {"seed": args.seed, "mesh_n": args.mesh}
        if args.command == "sample-field":
            cfg = resolve_config(raw, **over)
            if args.kappa is not None:
                cfg["sample_field"]["kappa"] = args.kappa
                cfg = resolve_config(cfg)
        else:
            cfg = resolve_config(raw, kappa_sim=args.kappa, **over)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate-config":
        print(json.dumps(cmd_validate_config(cfg), indent=2, sort_keys=True))
        return 0

    out = args.out or Path(os.environ.get(OUT_ENV) or "stochhomog-out")
    try:
        if args.command == "sample-field":
            path = cmd_sample_field(cfg, out)
        elif args.command == "homogenize":
            res = cmd_homogenize(cfg, out, workers=args.threads)
            if res.failures:
                print(f"warning: {len(res.failures)} of {res.config.kappa_sim} realizations failed", file=sys.stderr)
            path = out
        else:
            cmd_study(cfg, out, workers=args.threads)
            path = out / "study.csv"
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
