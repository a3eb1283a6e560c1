"""Experiment runner: restores a degraded image with one of the four model
variants (tvtik, detik, tvbox, debox), verifies the convergence theory on
the resulting trace, and writes trace.csv / report.json / restored image.

Configuration is a flat key=value text file plus --set overrides; see
README for the full key list.  Exit codes: 0 success, 2 configuration
error, 3 solver error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .energy import (
    check_descent,
    check_lower_bound_constants,
    theta_subgradient_estimate,
)
from .imaging import (
    DegradationModel,
    Downsampler,
    gaussian_kernel,
    load_image,
    load_kernel_text,
    motion_kernel,
    psnr,
    save_image,
    ssim,
    synthetic_image,
    uniform_kernel,
    upsample_nearest,
)
from .priors import (
    LeastSquaresTerm,
    ProxFailure,
    box_term,
    huber_tv_term,
    linear_denoiser,
    load_denoiser_weights,
    tikhonov_term,
    tv_term,
)
from .problem import CompositeObjective
from .solver import (
    SolverError,
    StopRule,
    TraceRow,
    pnp_nonsmooth_composite,
    pnp_smooth_composite,
    solve,
    solve_pnp_nonsmooth,
    solve_pnp_smooth,
)
from .stepsize import (
    gamma_threshold,
    lambda_of_gamma,
    make_params,
    pnp_nonsmooth_constants,
    pnp_nonsmooth_gamma_threshold,
)
from .tensorops import CirculantOperator, norm

__all__ = ["ExperimentConfig", "ConfigError", "run_experiment", "emit_trace_csv",
           "parse_trace_csv", "main"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "deblur"
    model: str = "detik"
    image: str = "synthetic:32"
    kernel: str = "gaussian:7:1.2"
    scale: int = 1
    nu: float = 0.01
    beta: float = 0.001
    tv_weight: float = 5.0
    huber_eps: float = 1e-3
    gamma: Optional[float] = None
    gamma_nu: Optional[float] = None
    alpha_fraction: float = 0.99
    sigma_nu: Optional[float] = None
    denoiser: str = "linear"
    denoiser_c: Optional[float] = None
    eps: float = 1e-8
    k_max: int = 1000
    seed: int = 0
    out: str = "out"
    output_format: str = "png"
    uncertified: bool = False


_BOOL = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def _conv_bool(raw: str) -> bool:
    if raw.lower() not in _BOOL:
        raise ValueError(f"expected a boolean, got {raw!r}")
    return _BOOL[raw.lower()]


def _conv_opt_float(raw: str) -> Optional[float]:
    return None if raw.lower() in ("", "none") else float(raw)


_CONVERTERS = {
    "task": str,
    "model": str,
    "image": str,
    "kernel": str,
    "scale": int,
    "nu": float,
    "beta": float,
    "tv_weight": float,
    "huber_eps": float,
    "gamma": _conv_opt_float,
    "gamma_nu": _conv_opt_float,
    "alpha_fraction": float,
    "sigma_nu": _conv_opt_float,
    "denoiser": str,
    "denoiser_c": _conv_opt_float,
    "eps": float,
    "k_max": int,
    "seed": int,
    "out": str,
    "output_format": str,
    "uncertified": _conv_bool,
}


def set_config_value(cfg: ExperimentConfig, key: str, raw: str, where: str = "") -> None:
    prefix = f"{where}: " if where else ""
    if key not in _CONVERTERS:
        raise ConfigError(f"{prefix}unknown configuration key {key!r}")
    try:
        setattr(cfg, key, _CONVERTERS[key](raw.strip()))
    except ValueError as exc:
        raise ConfigError(f"{prefix}bad value for {key!r}: {exc}") from exc


def load_config(path: str, cfg: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    cfg = cfg or ExperimentConfig()
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = body.split("=", 1)
        set_config_value(cfg, key.strip(), raw, where=f"{path}:{lineno}")
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.task not in ("deblur", "superres"):
        raise ConfigError(f"task must be deblur or superres, got {cfg.task!r}")
    if cfg.model not in ("tvtik", "detik", "tvbox", "debox"):
        raise ConfigError(f"unknown model {cfg.model!r}")
    if cfg.task == "superres" and cfg.scale < 2:
        raise ConfigError("superres needs scale >= 2")
    if cfg.task == "deblur" and cfg.scale != 1:
        raise ConfigError("deblur runs at scale 1")
    if not 0.0 <= cfg.alpha_fraction < 1.0:
        raise ConfigError(f"alpha_fraction must be in [0, 1), got {cfg.alpha_fraction}")
    if cfg.nu <= 0:
        raise ConfigError(f"nu must be positive, got {cfg.nu}")
    if cfg.output_format not in ("png", "pgm"):
        raise ConfigError(f"output_format must be png or pgm, got {cfg.output_format!r}")


def _load_experiment_image(spec: str) -> np.ndarray:
    if spec.startswith("synthetic:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad synthetic image spec {spec!r}") from exc
        return synthetic_image(n)
    if not os.path.exists(spec):
        raise ConfigError(f"image file not found: {spec}")
    img = load_image(spec)
    if img.ndim == 3:
        img = img.mean(axis=2)
    return img


def _build_kernel(spec: str) -> np.ndarray:
    parts = spec.split(":")
    try:
        if parts[0] == "gaussian" and len(parts) == 3:
            return gaussian_kernel(int(parts[1]), float(parts[2]))
        if parts[0] == "uniform" and len(parts) == 2:
            return uniform_kernel(int(parts[1]))
        if parts[0] == "motion" and len(parts) == 3:
            return motion_kernel(int(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ConfigError(f"bad kernel spec {spec!r}: {exc}") from exc
    if not os.path.exists(spec):
        raise ConfigError(f"kernel file not found: {spec}")
    return load_kernel_text(spec)


def _default_sigma_nu(model: str, nu: float) -> float:
    # Reported sweet spots per noise band for the two denoiser placements.
    if model == "debox":
        return 2.0 if nu <= 0.015 else (1.0 if nu <= 0.04 else 0.75)
    return 1.4 if nu <= 0.015 else (0.7 if nu <= 0.04 else 0.6)


def _build_denoiser(cfg: ExperimentConfig, shape, sigma: float):
    if cfg.denoiser.startswith("weights:"):
        path = cfg.denoiser.split(":", 1)[1]
        if not os.path.exists(path):
            raise ConfigError(f"denoiser weights file not found: {path}")
        return load_denoiser_weights(path, shape, sigma)
    if cfg.denoiser != "linear":
        raise ConfigError(f"unknown denoiser {cfg.denoiser!r} (use linear or weights:PATH)")
    c = cfg.denoiser_c if cfg.denoiser_c is not None else (0.2 if cfg.model == "debox" else 0.5)
    if not 0.0 < c < 1.0:
        raise ConfigError(f"denoiser_c must be in (0, 1), got {c}")
    std_px = 0.5 + 25.0 * sigma
    size = min(2 * int(math.ceil(3.0 * std_px)) + 1, min(shape) | 1)
    base = CirculantOperator(gaussian_kernel(size, std_px), shape)
    smooth = CirculantOperator.from_spectrum(np.abs(base.spectrum) ** 2)
    return linear_denoiser(c, smooth, sigma)


def _resolve_gamma(cfg: ExperimentConfig, threshold: float) -> float:
    if cfg.gamma is not None and cfg.gamma_nu is not None:
        raise ConfigError("set at most one of gamma and gamma_nu")
    if cfg.gamma is not None:
        gamma = cfg.gamma
    elif cfg.gamma_nu is not None:
        gamma = cfg.nu**2 / cfg.gamma_nu
    else:
        gamma = 0.99 * threshold
        if not math.isfinite(gamma):
            gamma = 1.0
    if gamma <= 0:
        raise ConfigError(f"resolved gamma must be positive, got {gamma}")
    return gamma


def _make_step_params(cfg, gamma, L_f1, L_h, l):
    lam = lambda_of_gamma(gamma, L_f1, L_h, l)
    alpha = max(0.0, cfg.alpha_fraction * lam)
    try:
        return make_params(gamma, alpha, L_f1, L_h, l, certified=not cfg.uncertified)
    except ValueError as exc:
        raise ConfigError(
            f"{exc}; pass --uncertified to run outside the admissible range"
        ) from exc


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one configured experiment and write its artifacts.

    Returns the report dictionary (also serialized to report.json).
    """
    _validate(cfg)
    x_true = _load_experiment_image(cfg.image)
    kernel = _build_kernel(cfg.kernel)
    blur = CirculantOperator(kernel, x_true.shape)
    down = Downsampler(cfg.scale) if cfg.scale > 1 else None
    if down is not None and (x_true.shape[0] % cfg.scale or x_true.shape[1] % cfg.scale):
        raise ConfigError(
            f"image dims {x_true.shape} not divisible by scale {cfg.scale}"
        )
    model = DegradationModel(blur=blur, down=down, nu=cfg.nu, seed=cfg.seed)
    b = model.degrade(x_true)
    x0 = upsample_nearest(b, cfg.scale) if down is not None else b
    degraded_view = x0
    op = model.operator

    ls = LeastSquaresTerm(op, b, cfg.nu)
    stop = StopRule(eps=cfg.eps, k_max=cfg.k_max)
    psnr_fn = lambda z: psnr(z, x_true, 1.0)
    sigma_nu = cfg.sigma_nu if cfg.sigma_nu is not None else _default_sigma_nu(cfg.model, cfg.nu)
    sigma = sigma_nu * cfg.nu
    notes: dict = {"initialization": "nearest-neighbor upsampled observation"
                   if down is not None else "observation"}
    phi_exact = True

    ratios: list[float] = []

    def make_ratio_hook(p_energy, params):
        def hook(u):
            est = theta_subgradient_estimate(p_energy, params, u)
            _, _, x, x1, x2 = u
            denom = norm(x - x1) + norm(x1 - x2)
            if denom > 1e-14:
                ratios.append(est / denom)
        return hook

    t_start = time.perf_counter()
    if cfg.model == "tvtik":
        L_f1, L_h, l = ls.lipschitz, cfg.beta, ls.lower_curvature
        gamma = _resolve_gamma(cfg, gamma_threshold(L_f1, L_h, l))
        params = _make_step_params(cfg, gamma, L_f1, L_h, l)
        p = CompositeObjective(f1=ls.as_smooth(), f2=tv_term(cfg.tv_weight), h=tikhonov_term(cfg.beta))
        final, trace = solve(p, params, x0, stop, psnr_fn=psnr_fn,
                             tuple_hook=make_ratio_hook(p, params))
    elif cfg.model == "detik":
        L_f1, L_h, l = ls.lipschitz, cfg.beta, ls.lower_curvature
        gamma = _resolve_gamma(cfg, gamma_threshold(L_f1, L_h, l))
        params = _make_step_params(cfg, gamma, L_f1, L_h, l)
        d = _build_denoiser(cfg, x_true.shape, sigma)
        phi_exact = d.spectrum_q is not None
        p = pnp_smooth_composite(ls.as_smooth(), d, tikhonov_term(cfg.beta), gamma)
        final, trace = solve_pnp_smooth(
            ls.as_smooth(), d, tikhonov_term(cfg.beta), params, x0, stop,
            psnr_fn=psnr_fn, tuple_hook=make_ratio_hook(p, params),
        )
    elif cfg.model == "tvbox":
        f1 = huber_tv_term(cfg.tv_weight, cfg.huber_eps, x_true.shape)
        L_f1, L_h, l = f1.lipschitz, ls.lipschitz, 0.0
        gamma = _resolve_gamma(cfg, gamma_threshold(L_f1, L_h, l))
        params = _make_step_params(cfg, gamma, L_f1, L_h, l)
        p = CompositeObjective(f1=f1, f2=box_term(0.0, 1.0), h=ls.as_smooth())
        final, trace = solve(p, params, x0, stop, psnr_fn=psnr_fn,
                             tuple_hook=make_ratio_hook(p, params))
    else:  # debox
        d = _build_denoiser(cfg, x_true.shape, sigma)
        phi_exact = d.spectrum_q is not None
        L_h = ls.lipschitz
        try:
            threshold = pnp_nonsmooth_gamma_threshold(d.lipschitz, L_h)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        gamma = _resolve_gamma(cfg, threshold)
        L_f1, l = pnp_nonsmooth_constants(d.lipschitz, gamma)
        params = _make_step_params(cfg, gamma, L_f1, L_h, l)
        p = pnp_nonsmooth_composite(box_term(0.0, 1.0), d, ls.as_smooth(), params)
        final, trace = solve_pnp_nonsmooth(
            box_term(0.0, 1.0), d, ls.as_smooth(), params, x0, stop,
            psnr_fn=psnr_fn, tuple_hook=make_ratio_hook(p, params),
        )
    wall = time.perf_counter() - t_start

    os.makedirs(cfg.out, exist_ok=True)
    emit_trace_csv(trace, os.path.join(cfg.out, "trace.csv"))
    restored_path = os.path.join(cfg.out, f"restored.{cfg.output_format}")
    save_image(restored_path, final.z)

    energy_report = check_descent(trace, params)
    lower_ok = None
    coeff = 1.0 / (2.0 * params.gamma) - (params.L_f1 + params.L_h) / 2.0
    if coeff > 0:
        lower_ok = check_lower_bound_constants(params.L_f1, params.L_h, params.gamma, trace)

    report = {
        "config": {
            k: getattr(cfg, k) for k in (
                "task", "model", "image", "kernel", "scale", "nu", "beta",
                "tv_weight", "huber_eps", "alpha_fraction", "denoiser",
                "eps", "k_max", "seed", "output_format", "uncertified",
            )
        },
        "parameters": {
            "gamma": params.gamma,
            "gamma_nu_effective": cfg.nu**2 / params.gamma,
            "alpha": params.alpha,
            "tau": params.tau,
            "lambda_gamma": params.lambda_gamma,
            "xi": params.xi,
            "L_f1": params.L_f1,
            "L_h": params.L_h,
            "l": params.l,
            "sigma": sigma,
            "sigma_nu": sigma_nu,
            "certified": params.certified,
        },
        "notes": notes,
        "phi_exact": phi_exact,
        "iterations": len(trace),
        "stopped_by": "eps" if len(trace) < cfg.k_max else "k_max",
        "wall_time_s": wall,
        "degraded_psnr": psnr(degraded_view, x_true, 1.0),
        "final_psnr": psnr(final.z, x_true, 1.0),
        "final_ssim": ssim(final.z, x_true) if min(x_true.shape) >= 11 else None,
        "final_objective": trace[-1].objective if trace else None,
        "final_crit_residual": trace[-1].crit_residual if trace else None,
        "energy": energy_report.to_dict(),
        "lower_bound_ok": lower_ok,
        # Empirical constant of the subgradient bound; logged, never asserted.
        "subgradient_ratio": {
            "max": max(ratios),
            "mean": sum(ratios) / len(ratios),
        }
        if ratios
        else None,
    }
    with open(os.path.join(cfg.out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# trace serialization

_CSV_COLUMNS = ("k", "theta", "h_gamma", "dx_norm", "dy_norm", "yz_gap",
                "crit_residual", "objective", "psnr")


def _fmt(x: float) -> str:
    return format(x, ".17g")


def emit_trace_csv(rows, path) -> None:
    """Write trace rows as CSV with a fixed column order, floats at 17
    significant digits.  Wall time is excluded so repeated runs are
    byte-identical."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_CSV_COLUMNS) + "\n")
        for row in rows:
            fields = [
                str(row.k),
                _fmt(row.theta),
                _fmt(row.h_gamma),
                _fmt(row.dx_norm),
                _fmt(row.dy_norm),
                _fmt(row.yz_gap),
                _fmt(row.crit_residual),
                _fmt(row.objective),
                "" if row.psnr is None else _fmt(row.psnr),
            ]
            fh.write(",".join(fields) + "\n")


def parse_trace_csv(path) -> list[TraceRow]:
    """Read back a trace written by :func:`emit_trace_csv`; elapsed_s is not
    serialized and comes back as 0."""
    rows: list[TraceRow] = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != ",".join(_CSV_COLUMNS):
            raise ValueError(f"{path}: unexpected trace header {header!r}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(_CSV_COLUMNS):
                raise ValueError(f"{path}: malformed row {line!r}")
            rows.append(
                TraceRow(
                    k=int(parts[0]),
                    theta=float(parts[1]),
                    h_gamma=float(parts[2]),
                    dx_norm=float(parts[3]),
                    dy_norm=float(parts[4]),
                    yz_gap=float(parts[5]),
                    crit_residual=float(parts[6]),
                    objective=float(parts[7]),
                    psnr=None if parts[8] == "" else float(parts[8]),
                    elapsed_s=0.0,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# command line


def _parse_sweep(spec: str) -> tuple[str, list[str]]:
    if "=" not in spec:
        raise ConfigError(f"--sweep expects key=v1,v2,..., got {spec!r}")
    key, raw = spec.split("=", 1)
    values = [v for v in raw.split(",") if v != ""]
    if not values:
        raise ConfigError(f"--sweep {key}: empty value list")
    return key.strip(), values


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dysplit",
        description="Image restoration by extrapolated three-operator splitting, "
        "with runtime verification of the convergence guarantees.",
    )
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--sweep", metavar="KEY=V1,V2,...",
                        help="run once per value of KEY, in subdirectories of --out")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="noise seed")
    parser.add_argument("--uncertified", action="store_true",
                        help="allow step parameters outside the admissible range "
                        "(theory checks become reports instead of requirements)")
    args = parser.parse_args(argv)

    try:
        cfg = ExperimentConfig()
        if args.config:
            cfg = load_config(args.config, cfg)
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, raw = item.split("=", 1)
            set_config_value(cfg, key.strip(), raw, where="--set")
        if args.out is not None:
            cfg.out = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.uncertified:
            cfg.uncertified = True

        if args.sweep:
            key, values = _parse_sweep(args.sweep)
            summary = []
            base_out = cfg.out
            for raw in values:
                sub = dataclasses.replace(cfg)
                set_config_value(sub, key, raw, where="--sweep")
                sub.out = os.path.join(base_out, f"{key}={raw}")
                report = run_experiment(sub)
                summary.append(
                    {
                        "value": raw,
                        "iterations": report["iterations"],
                        "final_psnr": report["final_psnr"],
                        "wall_time_s": report["wall_time_s"],
                    }
                )
                print(
                    f"{key}={raw}: {report['iterations']} iterations, "
                    f"PSNR {report['final_psnr']:.2f} dB"
                )
            os.makedirs(base_out, exist_ok=True)
            with open(os.path.join(base_out, "sweep_summary.json"), "w") as fh:
                json.dump({"key": key, "runs": summary}, fh, indent=2)
                fh.write("\n")
            return 0

        report = run_experiment(cfg)
        print(
            f"{cfg.model}/{cfg.task}: {report['iterations']} iterations, "
            f"PSNR {report['degraded_psnr']:.2f} -> {report['final_psnr']:.2f} dB, "
            f"energy violations: {report['energy']['n_violations']}"
        )
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, ProxFailure) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
