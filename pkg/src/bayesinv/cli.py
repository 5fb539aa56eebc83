"""Command-line interface: ``simulate``, ``fit``, ``report`` and ``selftest``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
failure, 4 completed with warnings.
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__, kernels
from . import bundle as bio
from .basis import FrequencyGrid, RadialGrid, basis_value, design_matrices
from .config import ConfigError, RunConfig, load_config
from .gaussian import NumericalError
from .hyper import GammaPrior
from .scattering import (
    FermiModel,
    fermi_density,
    nuclear_radius,
    simulate_fermi_dataset,
    simulate_synthetic,
)
from .selection import ModelPriors, joint_map_select, marginal_map_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_WARNINGS = 4

NUMERICAL_ERRORS = (NumericalError, np.linalg.LinAlgError, FloatingPointError)
# ConfigError, BundleError, BasisError, SelectionError and HyperError are all ValueErrors
CONFIG_ERRORS = (ValueError,)

HEATMAP_CSV = "heatmap.csv"
BASIS_CSV = "basis_curves.csv"
POSTERIOR_L_CSV = "posterior_l.csv"
POSTERIOR_K_CSV = "posterior_k.csv"
OVERLAY_RHO_CSV = "overlay_rho.csv"
OVERLAY_F_CSV = "overlay_F.csv"
REPORT_HEADERS = {
    BASIS_CSV: ("l", "j", "r", "b"),
    HEATMAP_CSV: ("l", "k", "score"),
    POSTERIOR_L_CSV: ("l", "p"),
    POSTERIOR_K_CSV: ("l", "k", "p"),
    OVERLAY_RHO_CSV: ("r", "rho", "rho_hat"),
    OVERLAY_F_CSV: ("q", "F", "F_hat", "log10_abs_F", "log10_abs_F_hat"),
}


def grids(config, q=None):
    grid = RadialGrid(config.N, config.R_c)
    qgrid = FrequencyGrid(np.asarray(q, dtype=float)) if q is not None else \
        FrequencyGrid.default(config.m, config.R_c)
    return grid, qgrid


def priors_from(config):
    return ModelPriors(GammaPrior(config.alpha1, config.beta1),
                       GammaPrior(config.alpha2, config.beta2),
                       k_max=config.k_max)


def fermi_model(config):
    R = config.fermi_R if config.fermi_R is not None else nuclear_radius(config.fermi_A)
    return FermiModel(R=R, d=config.fermi_d, Z=config.fermi_Z)


def _provenance(config, started):
    return {
        "version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "wall_time_s": time.perf_counter() - started,
        "numba": kernels.HAS_NUMBA,
    }


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(config):
    """Generate a dataset into ``config.out``; returns the sidecar metadata."""
    started = time.perf_counter()
    if config.problem == "fermi":
        model = fermi_model(config)
        sigma = 0.0 if config.sigma is None else config.sigma
        ds = simulate_fermi_dataset(model, config.q_list, sigma=sigma, seed=config.seed)
        truth = {"R": model.R, "d": model.d, "Z": model.Z, "alpha": model.alpha}
    else:
        grid, qgrid = grids(config)
        x_gen = np.ones(config.true_k) if config.x_gen == "ones" else config.x_gen
        ds = simulate_synthetic(config.true_l, config.true_k, grid, qgrid, x_gen=x_gen,
                                sigma=config.sigma, snr=config.snr, seed=config.seed,
                                quadrature=config.quadrature, k_max=config.k_max)
        truth = {"l": ds.l, "k": ds.k, "x": ds.x.tolist()}
    meta = _provenance(config, started)
    meta.update({"command": "simulate", "problem": config.problem, "m": ds.m,
                 "sigma": ds.sigma, "truth": truth})
    bio.save_dataset(config.out, ds, meta)
    return meta


# ---------------------------------------------------------------------------
# fit


def _true_density(config, meta, r):
    """Density behind the dataset, zeros when the sidecar carries no truth."""
    truth = meta.get("truth", {})
    if meta.get("problem") == "fermi":
        return fermi_density(r, FermiModel(truth["R"], truth["d"], truth["Z"], truth["alpha"]))
    if "l" in truth:
        grid = RadialGrid(config.N, config.R_c)
        dm = design_matrices(grid, FrequencyGrid.default(1, config.R_c), truth["l"],
                             truth["k"], quadrature=config.quadrature, k_max=config.k_max)
        return dm.B @ np.asarray(truth["x"], dtype=float)
    return np.zeros(r.shape)


def _fit_marginal(config, y, grid, qgrid, priors):
    res = marginal_map_pipeline(
        y, grid, qgrid, config.l_set, priors, n_phi=config.n_phi, n_psi=config.n_psi,
        seed=[config.seed, 1], mode=config.evidence_mode, use_order_prior=config.order_prior,
        quadrature=config.quadrature)
    t = res.tables
    t.check()
    n_l, n_k, n_j, n_i = t.p_psi.shape
    L, K, J, I = np.meshgrid(np.array(t.l_set), t.orders, np.arange(1, n_j + 1),
                             np.arange(1, n_i + 1), indexing="ij")
    tables = {
        bio.P_L_CSV: [np.array(t.l_set), t.p_l],
        bio.P_K_CSV: [L[:, :, 0, 0], K[:, :, 0, 0], t.p_k, t.log_evidence],
        bio.P_PHI_CSV: [L[..., 0], K[..., 0], J[..., 0],
                        np.broadcast_to(t.phis, (n_l, n_k, n_j)), t.p_phi],
        bio.P_PSI_CSV: [L, K, J, I, np.broadcast_to(t.psis, t.p_psi.shape), t.p_psi],
    }
    selection = {"j_hat": res.j_hat, "i_hat": res.i_hat}
    warnings = []
    if np.any(np.isneginf(t.log_evidence)):
        warnings.append("evidence underflowed to zero for some (l, k)")
    return res.l_hat, res.k_hat, res.phi, res.psi, res.x, tables, selection, warnings


def _fit_joint(config, y, grid, qgrid, priors):
    opts = {}
    if config.algorithm == "joint1":
        opts = {"lam0": config.lambda0, "max_iter": config.max_iter, "tol": config.tol}
    table, results, (l_hat, k_hat) = joint_map_select(
        y, grid, qgrid, config.l_set, priors, algorithm=config.algorithm,
        quadrature=config.quadrature, **opts)
    rows, trace_rows = [], []
    for (l, k), r in sorted(results.items()):
        rows.append((l, k, r.criterion, r.lam, r.phi, r.psi, r.iterations, r.converged,
                     r.at_boundary))
        for step, (lam, value) in enumerate(r.trace, start=1):
            trace_rows.append((l, k, step, lam, value))
    cols = list(zip(*rows))
    crit = [np.array(cols[0]), np.array(cols[1])] + [np.array(c, dtype=float) for c in cols[2:6]] \
        + [np.array(cols[6]), np.array(cols[7], dtype=bool), np.array(cols[8], dtype=bool)]
    tcols = list(zip(*trace_rows))
    trace = [np.array(tcols[0]), np.array(tcols[1]), np.array(tcols[2]),
             np.array(tcols[3], dtype=float), np.array(tcols[4], dtype=float)]
    best = results[(l_hat, k_hat)]
    warnings = []
    if not best.converged:
        warnings.append(f"selected model (l={l_hat}, k={k_hat}) did not converge")
    if best.at_boundary:
        warnings.append(f"selected model (l={l_hat}, k={k_hat}) has lam on the grid boundary")
    if best.max_increase > 0:
        warnings.append(f"criterion rose by {best.max_increase:.3g} (relative) during iteration")
    if not math.isfinite(best.criterion):
        raise NumericalError("no (l, k) has a finite joint criterion")
    selection = {"converged": best.converged, "at_boundary": best.at_boundary,
                 "iterations": best.iterations}
    return (l_hat, k_hat, best.phi, best.psi, best.x,
            {bio.CRITERION_CSV: crit, bio.TRACE_CSV: trace}, selection, warnings)


def cmd_fit(config, dataset_dir):
    """Fit every ``(l, k)`` to a saved dataset and write the result bundle to ``config.out``."""
    started = time.perf_counter()
    data = bio.load_dataset(dataset_dir)
    if data.meta.get("problem", config.problem) != config.problem:
        raise ConfigError(f"dataset problem {data.meta.get('problem')!r} differs from "
                          f"config problem {config.problem!r}")
    if config.problem == "synthetic" and data.m != config.m:
        raise ConfigError(f"dataset has m={data.m} points but config says m={config.m}")
    grid, qgrid = grids(config, data.q)
    priors = priors_from(config)
    y = data.y_noisy
    if config.algorithm == "marginal":
        l_hat, k_hat, phi, psi, x, tables, extra, warnings = _fit_marginal(
            config, y, grid, qgrid, priors)
    else:
        l_hat, k_hat, phi, psi, x, tables, extra, warnings = _fit_joint(
            config, y, grid, qgrid, priors)
    dm = design_matrices(grid, qgrid, l_hat, k_hat, quadrature=config.quadrature,
                         k_max=config.k_max)
    rho_hat = dm.B @ x
    F_hat = dm.A @ x
    if not (np.all(np.isfinite(rho_hat)) and np.all(np.isfinite(F_hat))):
        raise NumericalError("reconstruction is not finite")
    selection = {"algorithm": config.algorithm, "evidence_mode": config.evidence_mode,
                 "l_hat": int(l_hat), "k_hat": int(k_hat), "phi": float(phi),
                 "psi": float(psi), "lam": float(psi) / float(phi), **extra}
    meta = _provenance(config, started)
    meta.update({"command": "fit", "dataset": os.path.abspath(dataset_dir),
                 "dataset_config_hash": data.meta.get("config_hash"), "warnings": warnings})
    rho = {"r": dm.r, "rho_true": _true_density(config, data.meta, dm.r), "rho_hat": rho_hat}
    ff = {"q": data.q, "y_clean": data.y_clean, "y_noisy": data.y_noisy, "F_hat": F_hat}
    bio.save_bundle(config.out, meta, selection, x, rho, ff, tables)
    return bio.load_bundle(config.out)


# ---------------------------------------------------------------------------
# report


def _log10_abs(v):
    with np.errstate(divide="ignore"):
        out = np.log10(np.abs(v))
    return np.where(np.isfinite(out), out, -350.0)


def cmd_report(bundle_dir, out=None):
    """Plot-data CSVs for the bundle in ``bundle_dir``; returns the list of files written."""
    b = bio.load_bundle(bundle_dir)
    cfg = RunConfig.from_dict(b.metadata["config"])
    out = out or os.path.join(bundle_dir, "report")
    bio.ensure_dir(out)
    written = []

    def emit(name, columns):
        path = os.path.join(out, name)
        bio.write_csv(path, REPORT_HEADERS[name], columns)
        written.append(path)

    sel = b.selection
    grid = RadialGrid(cfg.N, cfg.R_c)
    r, _ = grid.nodes(cfg.quadrature)
    rows = [(l, j, rr, v) for l in cfg.l_set for j in range(1, sel["k_hat"] + 1)
            for rr, v in zip(r, basis_value(l, j * math.pi / cfg.R_c, r))]
    cols = list(zip(*rows))
    emit(BASIS_CSV, [np.array(cols[0]), np.array(cols[1]), np.array(cols[2]), np.array(cols[3])])

    if b.algorithm == "marginal":
        pk, pl = b.tables[bio.P_K_CSV], b.tables[bio.P_L_CSV]
        p_l_of = dict(zip(pl["l"].astype(int), pl["p_l"]))
        score = pk["p_k"] * np.array([p_l_of[int(l)] for l in pk["l"]])
        emit(HEATMAP_CSV, [pk["l"].astype(int), pk["k"].astype(int), score])
        emit(POSTERIOR_L_CSV, [pl["l"].astype(int), pl["p_l"]])
        rows = pk["l"] == sel["l_hat"]
        emit(POSTERIOR_K_CSV, [pk["l"][rows].astype(int), pk["k"][rows].astype(int),
                               pk["p_k"][rows]])
        score_kind = "p(k, l | y)"
    else:
        crit = b.tables[bio.CRITERION_CSV]
        emit(HEATMAP_CSV, [crit["l"].astype(int), crit["k"].astype(int), crit["J"]])
        score_kind = "J(k, l)"

    emit(OVERLAY_RHO_CSV, [b.rho["r"], b.rho["rho_true"], b.rho["rho_hat"]])
    F, F_hat = b.form_factor["y_noisy"], b.form_factor["F_hat"]
    emit(OVERLAY_F_CSV, [b.form_factor["q"], F, F_hat, _log10_abs(F), _log10_abs(F_hat)])
    bio.write_json(os.path.join(out, "report.json"),
                   {"bundle": os.path.abspath(bundle_dir), "score": score_kind,
                    "files": [os.path.basename(p) for p in written]})
    return written


# ---------------------------------------------------------------------------
# selftest


def selftest(seed=0):
    """Quick dual-route checks; returns a list of ``(name, passed, detail)``."""
    from .gaussian import log_evidence, ridge_solve
    from .hyper import HyperCriterionContext, j2_full, j2_reduced
    from .scattering import fermi_form_factor, form_factor_quadrature

    rng = np.random.default_rng(seed)
    out = []
    A = rng.standard_normal((12, 5))
    y = rng.standard_normal(12)
    lam, phi = 0.3, 2.0
    sol = ridge_solve(A, y, lam)
    x_ref = np.linalg.solve(A.T @ A + lam * np.eye(5), A.T @ y)
    err = np.max(np.abs(sol.x - x_ref)) / np.max(np.abs(x_ref))
    out.append(("ridge vs normal equations", err < 1e-10, f"rel {err:.2e}"))
    P = A @ A.T / (lam * phi) + np.eye(12) / phi
    dense = -0.5 * (12 * math.log(2 * math.pi) + np.linalg.slogdet(P)[1]
                    + y @ np.linalg.solve(P, y))
    err = abs(log_evidence(A, y, phi, lam * phi) - dense) / abs(dense)
    out.append(("k-space evidence vs dense", err < 1e-10, f"rel {err:.2e}"))
    ctx = HyperCriterionContext(A, y)
    err = abs(j2_full(phi, lam * phi, ctx) - j2_reduced(phi, lam * phi, ctx))
    out.append(("J2 dense vs reduced", err < 1e-9, f"abs {err:.2e}"))
    model = FermiModel.carbon12()
    q = np.array([0.01, 1.0, 3.0, 7.5])
    err = np.max(np.abs(fermi_form_factor(q, model) / form_factor_quadrature(q, model) - 1))
    out.append(("form factor closed form vs quadrature", err < 1e-6, f"rel {err:.2e}"))
    return out


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="bayesinv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--problem", choices=("synthetic", "fermi"),
                        help="override the configured problem")

    common(sub.add_parser("simulate", help="generate a dataset"))
    fit = sub.add_parser("fit", help="fit a dataset and write a result bundle")
    common(fit)
    fit.add_argument("--data", required=True, help="dataset directory written by simulate")
    fit.add_argument("--algorithm", choices=("joint1", "joint2", "marginal"))
    rep = sub.add_parser("report", help="write plot-data CSVs from a bundle")
    rep.add_argument("--bundle", required=True, help="bundle directory written by fit")
    rep.add_argument("--out", help="report directory (default: <bundle>/report)")
    st = sub.add_parser("selftest", help="run quick consistency checks")
    st.add_argument("--seed", type=int, default=0)
    return p


def _config(args):
    overrides = {"seed": args.seed, "out": args.out, "problem": args.problem,
                 "algorithm": getattr(args, "algorithm", None)}
    return load_config(args.config, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            meta = cmd_simulate(_config(args))
            print(f"wrote {meta['m']} data points to {meta['config']['out']}")
            return EXIT_OK
        if args.command == "fit":
            b = cmd_fit(_config(args), args.data)
            s = b.selection
            print(f"l_hat={s['l_hat']} k_hat={s['k_hat']} phi={s['phi']:.6g} "
                  f"psi={s['psi']:.6g} lam={s['lam']:.6g} -> {b.directory}")
            for w in b.warnings:
                print(f"warning: {w}", file=sys.stderr)
            return EXIT_WARNINGS if b.warnings else EXIT_OK
        if args.command == "report":
            for path in cmd_report(args.bundle, args.out):
                print(path)
            return EXIT_OK
        results = selftest(args.seed)
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
        return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERICAL
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
