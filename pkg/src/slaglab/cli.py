"""Command-line runner: ``slag-lab <command> --config <path>``.

Every command reads one JSON config, writes ``<command>.csv`` plus a
``<command>.json`` sidecar (config with defaults, acceptance windows,
summary numbers) into the output directory, and exits with

    0  all windows met
    2  at least one window violated
    1  configuration or runtime error
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from . import __version__
from .gluing import ScheduleError, glue_sweep, loglog_slope, schedule, write_sweep_csv
from .lawlor import (NeckParameters, angles_from_lambda, lambda_from_angles, normalize_lambda, sample_neck,
                     slag_residual, sphere_grid)
from .planes import (angle_criterion, canonical_slag_angles, characterizing_angles, plane_from_unitary,
                     random_special_unitary)
from .spectral import eigensolve, flat_torus_grid, ift_feasibility, spectrum_sweep, write_spectrum_csv
from .torus import CYTorusStructure, find_angle_criterion_pairs, write_catalog

log = logging.getLogger("slaglab")

COMMANDS = ("angles", "lawlor", "torus-search", "glue-sweep", "spectrum-sweep")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str = ""
    n: int = 3
    alphas: list = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    c_delta: float = 4.0
    c_eps: float = 32.0
    r0: float = 2.0
    R: float = 1.0
    beta: float = 0.1
    nu: float = 0.1
    ball: float = 0.3
    resolution: int = 16
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    # angles
    samples: int = 10000
    perturbation: float = 1e-3
    # lawlor
    dims: list = field(default_factory=lambda: [3, 4, 5])
    lambda_count: int = 200
    thetas: list = field(default_factory=list)
    # torus-search
    bound: int = 3
    max_pairs: int = 5000

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not self.alphas or any(a <= 0 for a in self.alphas):
            raise ConfigError("alphas must be a nonempty list of positive numbers")
        if any(b >= a for a, b in zip(self.alphas, self.alphas[1:])):
            raise ConfigError("alphas must be strictly decreasing")
        if self.command in ("glue-sweep", "spectrum-sweep") and len(self.alphas) < 2:
            raise ConfigError("a sweep needs at least two alphas to fit slopes")
        if self.n < 2 or self.jobs < 1 or self.samples < 1 or self.resolution < 1:
            raise ConfigError("n >= 2, jobs >= 1, samples >= 1 and resolution >= 1 are required")

    @classmethod
    def load(cls, path, command: str, overrides: dict) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if data.get("command", command) != command:
            raise ConfigError(f"config is for {data['command']!r}, not {command!r}")
        data["command"] = command
        data.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def schedule(self, alpha=None):
        return schedule(self.alphas[0] if alpha is None else alpha, self.c_delta, self.c_eps, self.r0,
                        self.R, self.n, self.beta, self.ball)


def _window(name: str, value, lo=None, hi=None, exact=None) -> dict:
    if exact is not None:
        ok = bool(value == exact)
    else:
        ok = bool(np.isfinite(value) and (lo is None or value >= lo) and (hi is None or value <= hi))
    return {"name": name, "value": value, "lo": lo, "hi": hi, "exact": exact, "ok": ok}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_csv(path: Path, cols, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


# --- angles -----------------------------------------------------------------


def _angle_chunk(args):
    n, seeds, eps = args
    rows = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        u1, u2 = random_special_unitary(n, rng), random_special_unitary(n, rng)
        eta, xi = plane_from_unitary(u1), plane_from_unitary(u2)
        ok = angle_criterion(eta, xi)
        canon = canonical_slag_angles(eta, xi)
        margin = float(characterizing_angles(eta, xi)[0].sorted[0])
        # SU(n) perturbation below the transversality margin keeps both planes SLag
        h = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        h = 0.5 * (h - h.conj().T)
        h -= np.trace(h) / n * np.eye(n)
        h *= eps * margin / np.linalg.norm(h, 2)
        u3 = expm(h) @ u2
        stable = angle_criterion(eta, plane_from_unitary(u3)) == ok
        rows.append({"seed": seed, "n": n, "criterion": ok, "sum_abs": float(np.abs(canon.signed).sum()),
                     "sign_case": canon.sign_case, "margin": margin, "stable": stable})
    return rows


def run_angles(cfg: ExperimentConfig, out: Path) -> tuple[list[dict], dict]:
    seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.samples, dtype=np.uint64).tolist()
    chunks = [(cfg.n, seeds[i:i + 500], cfg.perturbation) for i in range(0, len(seeds), 500)]
    rows = [r for part in _map(_angle_chunk, chunks, cfg.jobs) for r in part]
    frac = float(np.mean([r["criterion"] for r in rows]))
    stable = float(np.mean([r["stable"] for r in rows]))
    _write_csv(out / "angles.csv", ("seed", "n", "criterion", "sum_abs", "sign_case", "margin", "stable"), rows)
    windows = [_window("criterion_fraction", frac, 1.0, 1.0) if cfg.n <= 3
               else _window("criterion_fraction", frac, 1e-12, 1 - 1e-12),
               _window("open_fraction", stable, 1.0, 1.0)]
    return windows, {"criterion_fraction": frac, "open_fraction": stable}


# --- lawlor -----------------------------------------------------------------


def _lawlor_row(args):
    n, lam = args
    lam = np.asarray(lam, dtype=float)
    th = angles_from_lambda(lam)
    back = lambda_from_angles(th)
    ref = normalize_lambda(lam)
    neck = NeckParameters(back, th)
    smp = sample_neck(neck, np.linspace(-8, 8, 33), sphere_grid(n, 24))
    om, im, _ = slag_residual(smp)
    row = {"n": n, "angle_sum_error": abs(th.sum() - np.pi),
           "roundtrip_error": float(np.max(np.abs(back - ref) / ref)), "sup_omega": om, "sup_im_omega": im}
    row.update({f"lambda_{k + 1}": float(v) for k, v in enumerate(lam)})
    row.update({f"theta_{k + 1}": float(v) for k, v in enumerate(th)})
    return row


def run_lawlor(cfg: ExperimentConfig, out: Path) -> tuple[list[dict], dict]:
    for th in cfg.thetas:
        try:
            NeckParameters.from_angles(th)
        except ValueError as exc:
            raise ConfigError(f"invalid angles {th}: {exc}") from exc
    rng = np.random.default_rng(cfg.seed)
    tasks = [(n, rng.uniform(0.1, 10.0, n).tolist()) for n in cfg.dims for _ in range(cfg.lambda_count)]
    tasks += [(len(th), lambda_from_angles(th).tolist()) for th in cfg.thetas]
    rows = _map(_lawlor_row, tasks, cfg.jobs)
    nmax = max(n for n, _ in tasks)
    cols = (["n"] + [f"lambda_{k + 1}" for k in range(nmax)] + [f"theta_{k + 1}" for k in range(nmax)]
            + ["angle_sum_error", "roundtrip_error", "sup_omega", "sup_im_omega"])
    _write_csv(out / "lawlor.csv", cols, rows)
    summary = {k: float(max(r[k] for r in rows)) for k in ("angle_sum_error", "roundtrip_error", "sup_omega",
                                                         "sup_im_omega")}
    windows = [_window("max_angle_sum_error", summary["angle_sum_error"], hi=1e-8),
               _window("max_roundtrip_error", summary["roundtrip_error"], hi=1e-6),
               _window("max_sup_omega", summary["sup_omega"], hi=1e-6),
               _window("max_sup_im_omega", summary["sup_im_omega"], hi=1e-6)]
    return windows, summary


# --- torus search -----------------------------------------------------------


def run_torus_search(cfg: ExperimentConfig, out: Path) -> tuple[list[dict], dict]:
    T = CYTorusStructure.standard(cfg.n)
    pairs = find_angle_criterion_pairs(T, cfg.bound, seed=cfg.seed, max_pairs=cfg.max_pairs, jobs=cfg.jobs)
    write_catalog(pairs, out / "torus-search.csv", cfg.bound)
    ok = all(rep.qualified for _, _, rep in pairs)
    return [_window("all_pairs_qualified", ok, exact=True)], {"pairs": len(pairs)}


# --- gluing -----------------------------------------------------------------


def _glue_point(args):
    cfg, alpha = args
    rows, _ = glue_sweep([alpha], base=cfg.schedule(alpha))
    return rows[0]


def run_glue_sweep(cfg: ExperimentConfig, out: Path) -> tuple[list[dict], dict]:
    for a in cfg.alphas:
        cfg.schedule(a)  # raises ScheduleError when inadmissible
    rows = _map(_glue_point, [(cfg, a) for a in cfg.alphas], cfg.jobs)
    al = [r["alpha"] for r in rows]
    slopes = {k: loglog_slope(al, [r[k] for r in rows]) for k in ("sup_sin", "sup_1mcos", "weighted_rho2_sin")}
    write_sweep_csv(rows, slopes, out / "glue-sweep.csv")
    outside = max(r["sup_sin_outside"] for r in rows)
    windows = [_window("slope_sup_sin", slopes["sup_sin"], 0.8, 1.2),
               _window("slope_sup_1mcos", slopes["sup_1mcos"], 1.7, 2.3),
               _window("slope_weighted_rho2_sin", slopes["weighted_rho2_sin"], 2.6, 3.4),
               _window("sin_outside_ball", float(outside), exact=0.0)]
    return windows, {"slopes": slopes}


# --- spectrum ---------------------------------------------------------------


def run_spectrum_sweep(cfg: ExperimentConfig, out: Path) -> tuple[list[dict], dict]:
    for a in cfg.alphas:
        cfg.schedule(a)
    rows, slopes = spectrum_sweep(cfg.alphas, base=cfg.schedule(), resolution=cfg.resolution, nu=cfg.nu,
                                  jobs=cfg.jobs)
    write_spectrum_csv(rows, out / "spectrum-sweep.csv")
    lam_torus = float(eigensolve(flat_torus_grid([1.0] * cfg.n, cfg.resolution), 1)[0][0])
    n, beta = cfg.n, cfg.beta
    psi = [abs(r["psi_S"]) for r in rows]
    small = rows[-1]
    feas = ift_feasibility(small["alpha"], cfg.schedule(), small["C_I"], small["residual"], cfg.nu)
    windows = [
        _window("slope_lambda1", slopes["lambda1"], n - 2 - 0.4, n - 2 + 0.4),
        _window("slope_rayleigh", slopes["rayleigh"], n - 2 - 0.4, n - 2 + 0.4),
        _window("lambda2_floor", min(r["lambda2"] for r in rows) / (0.25 * lam_torus), 1.0, None),
        _window("slope_s_error", slopes["s_error"], (n - 2) / 2 - 0.4, (n - 2) / 2 + 0.4),
        _window("psi_S_ratio", max(psi) / min(psi), None, 2.0),
        _window("ablation_ratio", small["C_I_ablated"] / small["C_I"], 10.0, None),
        _window("slope_P_norm", slopes["P_norm_vs_alpha"], 1 - beta - 0.3, 1 - beta + 0.3),
        _window("exponent_inequality", feas["exponent"], None, 3.0 - 1e-12),
        _window("feasible_at_smallest_alpha", bool(feas["feasible"]), exact=True),
    ]
    return windows, {"slopes": slopes, "lambda1_torus_grid": lam_torus, "feasibility": feas}


RUNNERS = {"angles": run_angles, "lawlor": run_lawlor, "torus-search": run_torus_search,
           "glue-sweep": run_glue_sweep, "spectrum-sweep": run_spectrum_sweep}


def _map(fn, tasks, jobs: int) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(jobs, len(tasks))) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slag-lab", description="Special Lagrangian connected-sum laboratory.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--jobs", type=int, help="worker processes (overrides the config)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config, args.command, {"out": args.out, "seed": args.seed,
                                                                "jobs": args.jobs})
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        windows, summary = RUNNERS[cfg.command](cfg, out)
    except (ConfigError, ScheduleError, ValueError, TypeError) as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # runtime failure inside a pipeline
        log.exception("runtime error: %s", exc)
        return 1
    ok = all(w["ok"] for w in windows)
    # out and jobs do not affect results; leaving them out keeps sidecars byte-identical
    echo = {k: v for k, v in asdict(cfg).items() if k not in ("out", "jobs")}
    meta = {"command": cfg.command, "version": __version__, "config": echo, "windows": windows,
            "summary": summary, "status": "ok" if ok else "windows violated"}
    (out / f"{cfg.command}.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n",
                                             encoding="utf-8")
    for w in windows:
        log.info("%-28s %-5s %s", w["name"], "PASS" if w["ok"] else "FAIL", w["value"])
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
