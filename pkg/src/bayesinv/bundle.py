"""On-disk formats: datasets, result bundles and plot-data tables.

Tables are CSV (header row, comma separator, LF line ends, floats written
with ``%.17g`` so they read back bit-exactly); metadata is JSON.
"""

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

DATASET_CSV = "dataset.csv"
DATASET_JSON = "dataset.json"
DATASET_HEADER = ("q", "y_clean", "y_noisy")

METADATA_JSON = "metadata.json"
SELECTION_JSON = "selection.json"
COEFFICIENTS_CSV = "coefficients.csv"
RHO_CSV = "curves_rho.csv"
FF_CSV = "curves_F.csv"
P_L_CSV = "p_l.csv"
P_K_CSV = "p_k.csv"
P_PHI_CSV = "p_phi.csv"
P_PSI_CSV = "p_psi.csv"
CRITERION_CSV = "criterion.csv"
TRACE_CSV = "trace.csv"

HEADERS = {
    COEFFICIENTS_CSV: ("j", "x"),
    RHO_CSV: ("r", "rho_true", "rho_hat"),
    FF_CSV: ("q", "y_clean", "y_noisy", "F_hat"),
    P_L_CSV: ("l", "p_l"),
    P_K_CSV: ("l", "k", "p_k", "log_evidence"),
    P_PHI_CSV: ("l", "k", "j", "phi", "p_phi"),
    P_PSI_CSV: ("l", "k", "j", "i", "psi", "p_psi"),
    CRITERION_CSV: ("l", "k", "J", "lam", "phi", "psi", "iterations", "converged", "at_boundary"),
    TRACE_CSV: ("l", "k", "step", "lam", "J"),
}
MARGINAL_FILES = (P_L_CSV, P_K_CSV, P_PHI_CSV, P_PSI_CSV)
JOINT_FILES = (CRITERION_CSV, TRACE_CSV)
COMMON_FILES = (METADATA_JSON, SELECTION_JSON, COEFFICIENTS_CSV, RHO_CSV, FF_CSV)


class BundleError(ValueError):
    """Missing, malformed or inconsistent bundle member."""


def write_csv(path, header, columns):
    """Write equal-length columns under ``header``."""
    columns = [np.asarray(c).ravel() for c in columns]
    n = {c.size for c in columns}
    if len(n) > 1:
        raise BundleError(f"{path}: columns have unequal lengths {sorted(n)}")
    if len(columns) != len(header):
        raise BundleError(f"{path}: {len(columns)} columns for {len(header)} headers")
    is_int = [np.issubdtype(c.dtype, np.integer) or c.dtype == bool for c in columns]
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            lines = []
            for row in zip(*columns):
                lines.append(",".join(
                    str(int(v)) if ii else "%.17g" % v for v, ii in zip(row, is_int)))
            if lines:
                fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise BundleError(f"cannot write {path}: {exc}") from None


def read_csv(path, header=None):
    """Columns of a CSV file as float arrays keyed by header name."""
    if not os.path.exists(path):
        raise BundleError(f"missing bundle member {os.path.basename(path)} ({path})")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise BundleError(f"{path} is empty")
    names = tuple(rows[0])
    if header is not None and names != tuple(header):
        raise BundleError(f"{path}: header {names} differs from expected {tuple(header)}")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    except ValueError as exc:
        raise BundleError(f"{path}: non-numeric entry ({exc})") from None
    data = data.reshape(-1, len(names))
    return {name: data[:, a] for a, name in enumerate(names)}


def write_json(path, payload):
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
    except OSError as exc:
        raise BundleError(f"cannot write {path}: {exc}") from None


def read_json(path):
    if not os.path.exists(path):
        raise BundleError(f"missing bundle member {os.path.basename(path)} ({path})")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path} is not valid JSON: {exc}") from None


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise BundleError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise BundleError(f"output directory {path} is not writable")
    return path


# ---------------------------------------------------------------------------
# datasets


@dataclass
class DatasetFiles:
    q: np.ndarray
    y_clean: np.ndarray
    y_noisy: np.ndarray
    meta: dict

    @property
    def m(self):
        return self.q.size


def save_dataset(directory, dataset, meta):
    ensure_dir(directory)
    write_csv(os.path.join(directory, DATASET_CSV), DATASET_HEADER,
              [dataset.q, dataset.y_clean, dataset.y_noisy])
    write_json(os.path.join(directory, DATASET_JSON), meta)


def load_dataset(directory):
    cols = read_csv(os.path.join(directory, DATASET_CSV), DATASET_HEADER)
    meta = read_json(os.path.join(directory, DATASET_JSON))
    q = cols["q"]
    if q.size == 0:
        raise BundleError(f"{directory}: dataset has no rows")
    if not (np.all(q > 0) and np.all(np.diff(q) > 0)):
        raise BundleError(f"{directory}: q column must be positive and increasing")
    for name in DATASET_HEADER:
        if not np.all(np.isfinite(cols[name])):
            raise BundleError(f"{directory}: column {name} has non-finite entries")
    if meta.get("m") not in (None, q.size):
        raise BundleError(f"{directory}: sidecar says m={meta['m']} but CSV has {q.size} rows")
    return DatasetFiles(q, cols["y_clean"], cols["y_noisy"], meta)


# ---------------------------------------------------------------------------
# result bundles


@dataclass
class ResultBundle:
    """Everything ``fit`` writes, as loaded back from disk."""

    directory: str
    metadata: dict
    selection: dict
    x: np.ndarray
    rho: dict
    form_factor: dict
    tables: dict = field(default_factory=dict)

    @property
    def algorithm(self):
        return self.selection["algorithm"]

    @property
    def warnings(self):
        return list(self.metadata.get("warnings", []))


def _group_sums(keys, values):
    keys = np.round(np.column_stack(keys)).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    return np.bincount(inverse.ravel(), weights=values)


def _check_probabilities(name, p, groups, atol=1e-9):
    if np.any(p < 0) or np.any(p > 1 + atol) or not np.all(np.isfinite(p)):
        raise BundleError(f"{name}: probabilities outside [0, 1]")
    sums = _group_sums(groups, p) if groups else np.array([p.sum()])
    if not np.allclose(sums, 1.0, rtol=0, atol=atol):
        raise BundleError(f"{name}: probabilities do not sum to one (worst {sums.min()}..{sums.max()})")


def validate_bundle(b, atol=1e-9):
    sel = b.selection
    for key in ("algorithm", "l_hat", "k_hat", "phi", "psi", "lam"):
        if key not in sel:
            raise BundleError(f"{SELECTION_JSON} lacks field {key!r}")
    if b.x.size != sel["k_hat"]:
        raise BundleError(f"{COEFFICIENTS_CSV} has {b.x.size} entries but k_hat={sel['k_hat']}")
    if not math.isclose(sel["lam"], sel["psi"] / sel["phi"], rel_tol=1e-12):
        raise BundleError("selection: lam differs from psi/phi")
    for name, cols in ((RHO_CSV, b.rho), (FF_CSV, b.form_factor)):
        for col, v in cols.items():
            if not np.all(np.isfinite(v)):
                raise BundleError(f"{name}: column {col} has non-finite entries")
    if sel["algorithm"] == "marginal":
        t = b.tables
        _check_probabilities(P_L_CSV, t[P_L_CSV]["p_l"], [], atol)
        _check_probabilities(P_K_CSV, t[P_K_CSV]["p_k"], [t[P_K_CSV]["l"]], atol)
        pp = t[P_PHI_CSV]
        _check_probabilities(P_PHI_CSV, pp["p_phi"], [pp["l"], pp["k"]], atol)
        ps = t[P_PSI_CSV]
        _check_probabilities(P_PSI_CSV, ps["p_psi"], [ps["l"], ps["k"], ps["j"]], atol)
        pl = t[P_L_CSV]
        if int(pl["l"][np.argmax(pl["p_l"])]) != sel["l_hat"]:
            raise BundleError("selection: l_hat is not the argmax of p_l")
        pk = t[P_K_CSV]
        rows = pk["l"] == sel["l_hat"]
        if int(pk["k"][rows][np.argmax(pk["p_k"][rows])]) != sel["k_hat"]:
            raise BundleError("selection: k_hat is not the argmax of p_k for l_hat")
    else:
        crit = b.tables[CRITERION_CSV]
        J = np.where(np.isnan(crit["J"]), np.inf, crit["J"])
        best = J == J.min()
        picked = (crit["l"] == sel["l_hat"]) & (crit["k"] == sel["k_hat"])
        if not np.any(best & picked):
            raise BundleError("selection: (l_hat, k_hat) is not the argmin of J")
    return b


def save_bundle(directory, metadata, selection, x, rho, form_factor, tables):
    """``rho`` and ``form_factor`` map header names to columns; ``tables`` maps file names to column lists."""
    ensure_dir(directory)
    write_json(os.path.join(directory, METADATA_JSON), metadata)
    write_json(os.path.join(directory, SELECTION_JSON), selection)
    write_csv(os.path.join(directory, COEFFICIENTS_CSV), HEADERS[COEFFICIENTS_CSV],
              [np.arange(1, len(x) + 1), np.asarray(x, dtype=float)])
    write_csv(os.path.join(directory, RHO_CSV), HEADERS[RHO_CSV],
              [rho[h] for h in HEADERS[RHO_CSV]])
    write_csv(os.path.join(directory, FF_CSV), HEADERS[FF_CSV],
              [form_factor[h] for h in HEADERS[FF_CSV]])
    for name, columns in tables.items():
        write_csv(os.path.join(directory, name), HEADERS[name], columns)


def load_bundle(directory, validate=True):
    if not os.path.isdir(directory):
        raise BundleError(f"bundle directory {directory} does not exist")
    metadata = read_json(os.path.join(directory, METADATA_JSON))
    selection = read_json(os.path.join(directory, SELECTION_JSON))
    coef = read_csv(os.path.join(directory, COEFFICIENTS_CSV), HEADERS[COEFFICIENTS_CSV])
    rho = read_csv(os.path.join(directory, RHO_CSV), HEADERS[RHO_CSV])
    ff = read_csv(os.path.join(directory, FF_CSV), HEADERS[FF_CSV])
    names = MARGINAL_FILES if selection.get("algorithm") == "marginal" else JOINT_FILES
    tables = {n: read_csv(os.path.join(directory, n), HEADERS[n]) for n in names}
    b = ResultBundle(directory, metadata, selection, coef["x"], rho, ff, tables)
    return validate_bundle(b) if validate else b
