"""Command-line experiment runner.

Usage::

    relaxhjb <subcommand> --config FILE [--out DIR] [--seed N] [--threads N]

Subcommands and the CSV files they write (headers are fixed):

solve         solution.csv  x1[,x2],u
              control.csv   x1[,x2],lambda1..lambdaK   (interior nodes)
sweep-eps     eps_sweep.csv eps,sup_gap,bound_rhs,monotone_ok,c2beta_gap
perturb       stability.csv t,E_per,value_gap_norm,control_gap_norm,subopt_gap_norm,subopt_min
sensitivity   sensitivity_u.csv x1[,x2],delta_u
              sensitivity_lambda.csv x1[,x2],dlambda1..dlambdaK
              remainder.csv t,remainder,order
              eps_scaling.csv eps,norm
mc-verify     mc_verify.csv x0_1[,x0_2],mc_mean,mc_stderr,pde_value,z,n_paths,dt,seed
exact-reg     control_convergence.csv eps,sup_distance,exact,exact_predicted,mask_size
surface       surface_H.csv x1,x2,entropy,zang          (H - max on the slice x3 = 0)
              surface_rho.csv y1,y2,entropy,zang        (rho on the simplex)

Every run also writes manifest.json. Exit status: 0 success, 2 when a
checked invariant fails (artifacts are still written), 1 on error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import os
import platform
import sys
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize

from . import __version__
from . import smoothmax as sm
from .analysis import (control_convergence, eps_scaling_probe, eps_sweep, stability_sweep,
                       validate_sensitivity)
from .config import ExperimentConfig, Expression, config_hash, parse_config, with_overrides
from .config import _COEF
from .discretize import build_grid
from .errors import ConfigError, RelaxHJBError
from .model import ActionModel, PerturbationSpec, validate
from .problems import make_problem
from .simulate import simulate_value
from .solver import SolverOptions, solve_hjb

log = logging.getLogger("relaxhjb")

SUBCOMMANDS = ("solve", "sweep-eps", "perturb", "sensitivity", "mc-verify", "exact-reg", "surface")


# ---------------------------------------------------------------------------
# model construction


def _apply_coefficients(model: ActionModel, coefs: dict) -> ActionModel:
    grid, K, n = model.grid, model.K, model.n
    a, b, c, f, g = (x.copy() for x in (model.a, model.b, model.c, model.f, model.g))
    for key in sorted(coefs):
        values = Expression(coefs[key], n)(grid.coords)
        m = _COEF.match(key)
        ka, i, j, kb, ib, kc, kf = m.groups()
        k = next((int(x) for x in (ka, kb, kc, kf) if x is not None), None)
        if k is not None and not 1 <= k <= K:
            raise ConfigError(f"action index {k} out of range 1..{K}", key=f"problem.{key}")
        if ka is not None:
            if i is None:
                a[k - 1] = values[:, None, None] * np.eye(n)
            else:
                i, j = int(i) - 1, int(j) - 1
                if not (0 <= i < n and 0 <= j < n):
                    raise ConfigError("matrix index out of range", key=f"problem.{key}")
                a[k - 1, :, i, j] = a[k - 1, :, j, i] = values
        elif kb is not None:
            if not 1 <= int(ib) <= n:
                raise ConfigError("drift index out of range", key=f"problem.{key}")
            b[k - 1, :, int(ib) - 1] = values
        elif kc is not None:
            c[k - 1] = values
        elif kf is not None:
            f[k - 1] = values
        else:
            g = values
    return replace(model, a=a, b=b, c=c, f=f, g=g)


def build_model(cfg: ExperimentConfig) -> ActionModel:
    """Model described by a config: a builtin problem or an inline one, plus overrides."""
    if cfg.problem == "custom":
        grid = build_grid(cfg.domain, cfg.nodes)
        model = ActionModel.from_fields(grid, cfg.nu, a=np.eye(grid.n) * cfg.nu / 2, K=cfg.K,
                                        name="custom")
    else:
        model = make_problem(cfg.problem, nodes=cfg.nodes, K=cfg.K)
        if cfg.nu is not None:
            model = replace(model, nu=cfg.nu)
    model = _apply_coefficients(model, cfg.coefficients)
    validate(model)
    return model


def build_perturbation(model: ActionModel, cfg: ExperimentConfig) -> PerturbationSpec:
    spec = PerturbationSpec.zeros(model)
    if not cfg.perturbation:
        return spec
    shifted = replace(model, a=spec.da, b=spec.db, c=spec.dc, f=spec.df, g=spec.dg)
    try:
        d = _apply_coefficients(shifted, {k[1:]: v for k, v in cfg.perturbation.items()})
    except ConfigError as exc:
        raise ConfigError(exc.message, key=(exc.key or "").replace("problem.", "perturbation.d")) from None
    return PerturbationSpec(d.a, d.b, d.c, d.f, d.g)


def _family(cfg, K):
    return sm.build_family(cfg.generator, K)


def _opts(cfg):
    return SolverOptions(cfg.tol, cfg.max_iter, cfg.tie_tol)


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_csv(path: Path, header, rows):
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def _coord_header(n, prefix="x"):
    return [f"{prefix}{i + 1}" for i in range(n)]


@dataclass
class RunOutcome:
    files: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_solve(cfg, out: Path, res: RunOutcome):
    model = build_model(cfg)
    eps = cfg.eps[-1]
    s = solve_hjb(model, _family(cfg, model.K), eps, _opts(cfg))
    grid = model.grid
    write_csv(out / "solution.csv", _coord_header(grid.n) + ["u"],
              [(*x, u) for x, u in zip(grid.coords, s.u)])
    write_csv(out / "control.csv", _coord_header(grid.n) + [f"lambda{k + 1}" for k in range(model.K)],
              [(*x, *lam) for x, lam in zip(grid.coords[grid.interior], s.control)])
    res.files += ["solution.csv", "control.csv"]
    res.summary.update(eps=eps, iterations=s.iterations, final_residual=s.final_residual)


def _cmd_sweep(cfg, out, res):
    model = build_model(cfg)
    fam = _family(cfg, model.K)
    eps = sorted(cfg.eps, reverse=True)
    rows = eps_sweep(model, fam, eps, _opts(cfg), beta=cfg.beta, threads=cfg.threads)
    write_csv(out / "eps_sweep.csv", ["eps", "sup_gap", "bound_rhs", "monotone_ok", "c2beta_gap"],
              [(r.eps, r.sup_gap, r.bound_rhs, r.monotone_ok, r.c2beta_gap) for r in rows])
    res.files.append("eps_sweep.csv")
    tol = cfg.tol
    for r in rows:
        if not (-2 * tol <= r.sup_gap <= r.bound_rhs + 2 * tol):
            res.violations.append(f"eps={r.eps}: sup_gap {r.sup_gap} outside [0, {r.bound_rhs}]")
        if not r.monotone_ok:
            res.violations.append(f"eps={r.eps}: value not monotone in eps")


def _cmd_perturb(cfg, out, res):
    model = build_model(cfg)
    spec = build_perturbation(model, cfg)
    rows = stability_sweep(model, spec, cfg.t, _family(cfg, model.K), cfg.eps[-1], beta=cfg.beta,
                           opts=_opts(cfg), threads=cfg.threads)
    write_csv(out / "stability.csv",
              ["t", "E_per", "value_gap_norm", "control_gap_norm", "subopt_gap_norm", "subopt_min"],
              [(r.t, r.E_per, r.value_gap_norm, r.control_gap_norm, r.subopt_gap_norm, r.subopt_min)
               for r in rows])
    res.files.append("stability.csv")
    for r in rows:
        if r.subopt_min < -2 * cfg.tol:
            res.violations.append(f"t={r.t}: frozen-control value exceeds optimal by {-r.subopt_min}")


def _cmd_sensitivity(cfg, out, res):
    model = build_model(cfg)
    spec = build_perturbation(model, cfg)
    fam = _family(cfg, model.K)
    eps = cfg.eps[-1]
    sens = validate_sensitivity(model, fam, eps, spec, cfg.t, _opts(cfg), threads=cfg.threads)
    grid = model.grid
    write_csv(out / "sensitivity_u.csv", _coord_header(grid.n) + ["delta_u"],
              [(*x, v) for x, v in zip(grid.coords, sens.delta_u)])
    write_csv(out / "sensitivity_lambda.csv",
              _coord_header(grid.n) + [f"dlambda{k + 1}" for k in range(model.K)],
              [(*x, *d) for x, d in zip(grid.coords[grid.interior], sens.delta_lambda)])
    write_csv(out / "remainder.csv", ["t", "remainder", "order"],
              [(r.t, r.remainder, r.order) for r in sens.remainder])
    scaling = eps_scaling_probe(model, fam, sorted((e for e in cfg.eps if e > 0), reverse=True), spec,
                                beta=cfg.beta, opts=_opts(cfg), threads=cfg.threads)
    write_csv(out / "eps_scaling.csv", ["eps", "norm"], [(r.eps, r.norm) for r in scaling])
    res.files += ["sensitivity_u.csv", "sensitivity_lambda.csv", "remainder.csv", "eps_scaling.csv"]
    drift = float(np.abs(sens.delta_lambda.sum(axis=1)).max(initial=0.0))
    if drift > 1e-9:
        res.violations.append(f"control sensitivity leaves the simplex tangent space ({drift})")


def _pde_value(model, u, x0):
    grid = model.grid
    interp = RegularGridInterpolator(tuple(grid.axes), u.reshape(grid.shape))
    return float(interp(np.asarray(x0)[None, :])[0])


def _cmd_mc(cfg, out, res):
    model = build_model(cfg)
    eps = cfg.eps[-1]
    s = solve_hjb(model, _family(cfg, model.K), eps, _opts(cfg))
    x0 = np.array(cfg.x0)
    est = simulate_value(model, s, x0, cfg.n_paths, cfg.dt, cfg.seed, bridge=cfg.bridge)
    pde = _pde_value(model, s.u, x0)
    if est.stderr > 0:
        z = (est.mean - pde) / est.stderr
    else:
        z = 0.0 if abs(est.mean - pde) <= 1e-12 else math.inf
    write_csv(out / "mc_verify.csv",
              _coord_header(model.n, "x0_") + ["mc_mean", "mc_stderr", "pde_value", "z", "n_paths",
                                                "dt", "seed"],
              [(*x0, est.mean, est.stderr, pde, z, est.n_paths, est.dt, est.seed)])
    res.files.append("mc_verify.csv")
    res.summary.update(z=z)
    if abs(z) > 3:
        res.violations.append(f"Monte Carlo estimate off by {z:.2f} standard errors")


def _cmd_exact_reg(cfg, out, res):
    model = build_model(cfg)
    rows = control_convergence(model, _family(cfg, model.K), cfg.eps, cfg.gap_threshold, _opts(cfg),
                               threads=cfg.threads)
    write_csv(out / "control_convergence.csv",
              ["eps", "sup_distance", "exact", "exact_predicted", "mask_size"],
              [(r.eps, r.sup_distance, r.exact, r.exact_predicted, r.mask_size) for r in rows])
    res.files.append("control_convergence.csv")
    for r in rows:
        if r.exact_predicted and r.mask_size and not r.exact:
            res.violations.append(f"eps={r.eps}: control not exact on the strict region")


def conjugate_value(family: sm.SmoothMaxFamily, lam) -> float:
    """``rho(lam) = sup_x (lam.x - H(x))`` by convex minimization, ``x_K`` pinned to 0."""
    lam = np.asarray(lam, dtype=float)
    K = family.K

    def obj(z):
        x = np.append(z, 0.0)
        h, g = sm.value_and_grad(family, 1.0, x)
        return float(h - lam @ x), (g - lam)[:-1]

    best = None
    for start in (np.zeros(K - 1), 4.0 * (lam[:-1] - lam[-1])):
        r = minimize(obj, start, jac=True, method="L-BFGS-B", options={"ftol": 1e-15, "gtol": 1e-12})
        if best is None or r.fun < best.fun:
            best = r
    return float(-best.fun) + 0.0  # no signed zero in output


def emit_surface(lo: float = -2.0, hi: float = 2.0, points: int = 41, simplex_points: int = 20):
    """Excess over the max and exploration reward of the entropy and quartic generators, K = 3.

    Returns ``(surface_rows, rho_rows)``: ``(x1, x2, H_en - max, H_zang - max)``
    at ``x3 = 0`` and ``(y1, y2, rho_en, rho_zang)`` on the simplex grid of
    step ``1 / simplex_points``.
    """
    fams = [sm.build_family("entropy", 3), sm.build_family("zang", 3)]
    ax = np.linspace(lo, hi, points)
    X1, X2 = np.meshgrid(ax, ax, indexing="ij")
    X = np.stack([X1.ravel(), X2.ravel(), np.zeros(X1.size)], axis=1)
    mx = X.max(axis=1)
    cols = [sm.eval_H(f, X) - mx for f in fams]
    surface = [(x[0], x[1], a, b) for x, a, b in zip(X, *cols)]
    rho = []
    m = simplex_points
    for i in range(m + 1):
        for j in range(m + 1 - i):
            y = np.array([i / m, j / m, (m - i - j) / m])
            rho.append((y[0], y[1], sm.rho_entropy(y), conjugate_value(fams[1], y)))
    return surface, rho


def _cmd_surface(cfg, out, res):
    surf, rho = emit_surface(-cfg.surface_range, cfg.surface_range, cfg.surface_points,
                             cfg.simplex_points)
    write_csv(out / "surface_H.csv", ["x1", "x2", "entropy", "zang"], surf)
    write_csv(out / "surface_rho.csv", ["y1", "y2", "entropy", "zang"], rho)
    res.files += ["surface_H.csv", "surface_rho.csv"]


_COMMANDS = {"solve": _cmd_solve, "sweep-eps": _cmd_sweep, "perturb": _cmd_perturb,
             "sensitivity": _cmd_sensitivity, "mc-verify": _cmd_mc, "exact-reg": _cmd_exact_reg,
             "surface": _cmd_surface}


def run(subcommand: str, config: ExperimentConfig, out=None) -> int:
    """Execute one subcommand, write its CSVs and manifest, return the exit code."""
    if subcommand not in _COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    out = Path(out if out is not None else config.out)
    res = RunOutcome()
    _COMMANDS[subcommand](config, out, res)
    code = 2 if res.violations else 0
    manifest = {
        "subcommand": subcommand,
        "config_sha256": config_hash(config),
        "seed": config.seed,
        "threads": config.threads,
        "versions": {"relaxhjb": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "outputs": res.files,
        "summary": {k: _fmt(v) for k, v in res.summary.items()},
        "violations": res.violations,
        "exit_code": code,
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for v in res.violations:
        log.warning("invariant violated: %s", v)
    return code


def _parser():
    p = argparse.ArgumentParser(prog="relaxhjb", description="Regularized HJB experiments.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=False, help="experiment config file")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    p.add_argument("--threads", type=int, help="worker threads for sweeps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None:
            if args.subcommand != "surface":
                raise ConfigError("--config is required for this subcommand")
            cfg = ExperimentConfig()
        else:
            cfg = parse_config(args.config)
        cfg = with_overrides(cfg, seed=args.seed, threads=args.threads, out=args.out)
        return run(args.subcommand, cfg)
    except RelaxHJBError as exc:
        print(f"relaxhjb: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
