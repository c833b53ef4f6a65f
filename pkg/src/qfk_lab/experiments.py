"""Declarative experiment runners behind the ``qfk-lab`` command.

Each runner takes a normalized config dict (every default and seed filled
in) and returns an :class:`ExperimentReport`.  Per-cell randomness comes from
``numpy.random.default_rng([seed, tag, ...])`` so a rerun of the saved config
reproduces every row.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import analysis, haar
from .circuits import CircuitTemplate, build_family, sample_angles
from .errors import ResourceError
from .kernels import KINDS, KernelSpec, cross_gram, gram_matrix
from .ml import fit_and_score, make_sine_dataset
from .statevec import max_qubits

SUBCOMMANDS = ("variance", "fourier", "classify", "geodiff", "moments")

# deterministic stream tags
_DATA, _THETA, _MC = 1, 2, 3


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


DEFAULTS: dict[str, dict] = {
    "variance": {
        "circuits": [
            {"family": "HEA", "L": 3, "kernels": ["Fidelity"]},
            {"family": "ALA", "m": 2, "L": 3, "kernels": ["ALDQFKNormalized"]},
        ],
        "n_values": [2, 4, 6, 8],
        "points": 100,
        "data_sets": 5,
        "param_sets": 5,
        "structure_seed": 0,
    },
    "fourier": {
        "family": "ALA",
        "settings": [[2, 1], [3, 1], [4, 1], [2, 2], [3, 2]],
        "kernels": ["Fidelity", "ALDQFKNormalized"],
        "grid_points": 100,
        "cutoff": 12,
        "theta_seeds": 10,
        "input_dim": 1,
        "structure_seed": 0,
    },
    "classify": {
        "family": "ALA",
        "n": 1,
        "L_values": [2, 3, 4],
        "kernels": ["Fidelity", "ALDQFKNormalized"],
        "w_values": list(range(2, 13)),
        "b": 0.3,
        "points": 100,
        "theta_seeds": 10,
        "folds": 5,
        "grid_points": 100,
        "cutoff": 12,
        "data_seed": 1234,
        "structure_seed": 0,
    },
    "geodiff": {
        "family": "HEA",
        "L": 3,
        "m": 2,
        "n_values": [2, 4, 6, 8],
        "points": 100,
        "trials": 10,
        "eigen_floor": None,
        "structure_seed": 0,
    },
    "moments": {
        "dims": [2, 4],
        "samples": 100_000,
        "closure_samples": 10_000,
        "fidelity_n": [2, 3, 4],
        "aldqfk_n": [2, 3],
        "ala_n": [4, 6, 8],
        "ala_m": 2,
        "ala_d": 1,
        "jackknife_batches": 20,
    },
}

QUICK: dict[str, dict] = {
    "variance": {"points": 20, "data_sets": 2, "param_sets": 2},
    "fourier": {"theta_seeds": 3},
    "classify": {"theta_seeds": 3},
    "geodiff": {"points": 20, "trials": 3},
    "moments": {"samples": 20_000, "closure_samples": 4_000},
}


def normalize_config(raw: dict | None, subcommand: str, quick: bool = False, seed: int | None = None,
                     threads: int | None = None) -> dict:
    """Fill defaults, apply the quick profile and CLI overrides, validate."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    raw = dict(raw or {})
    if raw.get("subcommand", subcommand) != subcommand:
        raise ConfigError(f"config is for {raw['subcommand']!r}, not {subcommand!r}")
    base = json.loads(json.dumps(DEFAULTS[subcommand]))
    if quick or raw.get("quick"):
        base.update(QUICK[subcommand])
    allowed = set(base) | {"subcommand", "seed", "threads", "quick"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {subcommand}: {sorted(unknown)}")
    base.update({k: v for k, v in raw.items() if k in DEFAULTS[subcommand]})
    base["subcommand"] = subcommand
    base["quick"] = bool(quick or raw.get("quick", False))
    base["seed"] = int(seed if seed is not None else raw.get("seed", 0))
    base["threads"] = int(threads if threads is not None else raw.get("threads", 1))
    _validate(base)
    return base


def _kinds(kernels) -> None:
    for k in kernels:
        if k not in KINDS:
            raise ConfigError(f"unknown kernel kind {k!r}")


def _validate(cfg: dict) -> None:
    sub = cfg["subcommand"]
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if sub == "variance":
        for c in cfg["circuits"]:
            _kinds(c.get("kernels", []))
        if cfg["points"] < 2:
            raise ConfigError("need at least two points per data set")
    elif sub == "fourier":
        if cfg["input_dim"] != 1:
            raise ConfigError("Fourier analysis supports one-dimensional inputs only")
        _kinds(cfg["kernels"])
    elif sub == "classify":
        _kinds(cfg["kernels"])
    elif sub == "moments":
        if max(cfg["dims"]) > 16:
            raise ConfigError("moment battery dimensions must be <= 16")


# ---------------------------------------------------------------------------
# report


@dataclass
class ExperimentReport:
    config: dict
    rows: list[dict]
    comparators: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    extra_tables: dict[str, list[dict]] = field(default_factory=dict)
    plots: dict[str, str] = field(default_factory=dict)

    @staticmethod
    def _csv(rows: list[dict]) -> str:
        if not rows:
            return ""
        cols = list(rows[0])
        for r in rows[1:]:
            cols += [c for c in r if c not in cols]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
        return buf.getvalue()

    def results_csv(self) -> str:
        return self._csv(self.rows)

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "rows": self.rows, "comparators": self.comparators,
                           "meta": self.meta}, indent=2, sort_keys=True, default=_json_default)

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.normalized.json"), "w") as fh:
            json.dump(self.config, fh, indent=2, sort_keys=True)
        with open(os.path.join(out_dir, "results.csv"), "w") as fh:
            fh.write(self.results_csv())
        for name, rows in self.extra_tables.items():
            with open(os.path.join(out_dir, f"{name}.csv"), "w") as fh:
                fh.write(self._csv(rows))
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            fh.write(self.to_json())
        for name, svg in self.plots.items():
            with open(os.path.join(out_dir, f"plot_{name}.svg"), "w") as fh:
                fh.write(svg)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v, default=_json_default)
    return v


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


def _rng(cfg: dict, *tags) -> np.random.Generator:
    return np.random.default_rng([cfg["seed"], *tags])


def check_resources(n: int, batch: int) -> None:
    """Refuse runs whose batched statevectors would exceed the ceiling.

    The budget is three batches of ``2**n`` amplitudes per point against
    the memory of a single state at the qubit ceiling.
    """
    if n > max_qubits():
        raise ResourceError(f"{n} qubits exceeds the simulator ceiling of {max_qubits()}")
    need = 3 * batch * (2**n) * 16
    budget = (2 ** max_qubits()) * 16
    if need > budget:
        raise ResourceError(f"estimated peak memory {need / 2**20:.1f} MiB exceeds the "
                            f"{budget / 2**20:.1f} MiB ceiling for n={n}, batch={batch}")


def _template(family: str, n: int, L: int, m: int | None, structure_seed: int,
              n_features: int | None = None) -> CircuitTemplate:
    if family.upper() == "ALA":
        m = 1 if n == 1 else (m or 2)
    return build_family(family, n, L, m, structure_seed, n_features)


# ---------------------------------------------------------------------------
# runners


def run_variance(cfg: dict) -> ExperimentReport:
    t0 = time.time()
    for c in cfg["circuits"]:
        for n in cfg["n_values"]:
            check_resources(n, cfg["points"])
    rows, slopes = [], {}
    for ci, c in enumerate(cfg["circuits"]):
        for kind in c["kernels"]:
            var_by_n = []
            for n in cfg["n_values"]:
                t = _template(c["family"], n, c["L"], c.get("m"), cfg["structure_seed"])
                grams = []
                for di in range(cfg["data_sets"]):
                    X = sample_angles(_rng(cfg, _DATA, ci, n, di), (cfg["points"], t.n_features))
                    for pi in range(cfg["param_sets"]):
                        th = sample_angles(_rng(cfg, _THETA, ci, n, pi), t.n_params)
                        grams.append(gram_matrix(KernelSpec(kind, t, th), X, threads=cfg["threads"]))
                st = analysis.pooled_offdiag_stats(grams)
                var_by_n.append(st.variance)
                row = {
                    "family": c["family"], "m": c.get("m"), "L": c["L"], "kernel": kind, "n": n,
                    "mean": st.mean, "variance": st.variance, "mean_stderr": st.mean_stderr,
                    "variance_stderr": st.variance_stderr, "count": st.count,
                    "circuit_hash": t.descriptor_hash(), "seed": cfg["seed"],
                }
                row.update(_comparator(kind, c, n))
                rows.append(row)
            key = f"{c['family']}/{kind}"
            slopes[key] = analysis.log2_slope(cfg["n_values"], var_by_n) if len(var_by_n) > 1 else None
    rows.sort(key=lambda r: (r["family"], r["kernel"], r["n"]))
    plot = _svg_lines({k: ([r["n"] for r in rows if f"{r['family']}/{r['kernel']}" == k],
                           [np.log2(r["variance"]) for r in rows if f"{r['family']}/{r['kernel']}" == k])
                       for k in slopes}, "n", "log2 variance")
    return ExperimentReport(cfg, rows, {"log2_variance_slope": slopes},
                            {"wall_seconds": time.time() - t0}, plots={"variance": plot})


def _comparator(kind: str, c: dict, n: int) -> dict:
    fam = c["family"].upper()
    if kind == "Fidelity":
        if fam == "ALA" and c.get("m") and n % c["m"] == 0:
            f = haar.analytic_fidelity_stats(n, "ALA", c["m"])
        else:
            f = haar.analytic_fidelity_stats(n)
    elif kind.startswith("ALDQFK") and fam == "ALA" and c.get("m") and n % c["m"] == 0:
        f = haar.analytic_aldqfk_stats(n, "ALA", c["m"], 1)
    elif kind.startswith("ALDQFK"):
        f = haar.analytic_aldqfk_stats(n)
    else:
        return {}
    # the Fisher-kernel formulas describe a single term, not the normalized sum
    return {"analytic_case": f.case, "analytic_mean": f.mean, "analytic_variance": f.variance_value,
            "analytic_kind": f.variance_kind, "analytic_scope": "single term" if f.kernel == "ALDQFK" else "kernel"}


def _fourier_tables(cfg: dict, kind: str, t: CircuitTemplate, seeds: int, tag: tuple) -> list:
    xs = analysis.uniform_grid(cfg["grid_points"])
    out = []
    for s in range(seeds):
        th = sample_angles(_rng(cfg, _THETA, *tag, s), t.n_params)
        K = cross_gram(KernelSpec(kind, t, th), xs, threads=cfg["threads"])
        out.append((th, analysis.fourier_fit(xs, K, cfg["cutoff"])))
    return out


def run_fourier(cfg: dict) -> ExperimentReport:
    t0 = time.time()
    rows, amp_rows, overlap = [], [], {}
    for L, n in cfg["settings"]:
        check_resources(n, cfg["grid_points"])
        t = _template(cfg["family"], n, L, 2, cfg["structure_seed"], n_features=1)
        mean_amp = {}
        for kind in cfg["kernels"]:
            # theta seeds are shared across kernels so the comparison is paired
            tabs = _fourier_tables(cfg, kind, t, cfg["theta_seeds"], (L, n))
            for s, (_, tab) in enumerate(tabs):
                rows.append({"kernel": kind, "L": L, "n": n, "theta_seed": s, "fit_mae": tab.fit_mae,
                             "hermitian_error": tab.hermitian_error(), "circuit_hash": t.descriptor_hash(),
                             "seed": cfg["seed"]})
            A = np.mean([np.abs(tab.coefficients) for _, tab in tabs], axis=0)
            mean_amp[kind] = A
            f = tabs[0][1].frequencies
            for a, wa in enumerate(f):
                for b, wb in enumerate(f):
                    amp_rows.append({"kernel": kind, "L": L, "n": n, "omega": int(wa), "omega_prime": int(wb),
                                     "mean_abs": float(A[a, b]), "sub_threshold": int(A[a, b] < 1e-3)})
        if len(mean_amp) >= 2:
            k1, k2 = list(mean_amp)[:2]
            s1, s2 = mean_amp[k1] > 1e-2, mean_amp[k2] > 1e-2
            joint = int((s1 | s2).sum())
            overlap[f"L={L},n={n}"] = {"exclusive": int((s1 ^ s2).sum()), "joint": joint,
                                       "ratio": float((s1 ^ s2).sum() / joint) if joint else 0.0}
    rows.sort(key=lambda r: (r["kernel"], r["L"], r["n"], r["theta_seed"]))
    spectra = {}
    for r in amp_rows:
        if r["omega"] == -r["omega_prime"] and r["omega"] >= 0:
            spectra.setdefault(f"{r['kernel']} L={r['L']} n={r['n']}", ([], []))
            spectra[f"{r['kernel']} L={r['L']} n={r['n']}"][0].append(r["omega"])
            spectra[f"{r['kernel']} L={r['L']} n={r['n']}"][1].append(r["mean_abs"])
    return ExperimentReport(cfg, rows, {"support_overlap": overlap}, {"wall_seconds": time.time() - t0},
                            extra_tables={"fourier_amplitudes": amp_rows},
                            plots={"amplitudes": _svg_lines(spectra, "omega", "|c(w,-w)|")})


def run_classify(cfg: dict) -> ExperimentReport:
    """Misclassification over theta seeds next to |c_{w,-w}| of the same kernel."""
    t0 = time.time()
    rows, corr = [], {}
    n = cfg["n"]
    check_resources(n, max(cfg["points"], cfg["grid_points"]))
    ws = list(cfg["w_values"])
    base = make_sine_dataset(cfg["points"], ws[0], cfg["b"], cfg["data_seed"])
    for L in cfg["L_values"]:
        t = _template(cfg["family"], n, L, 2, cfg["structure_seed"], n_features=1)
        for kind in cfg["kernels"]:
            tabs = _fourier_tables(cfg, kind, t, cfg["theta_seeds"], (L, n))
            err = np.zeros((len(tabs), len(ws)))
            amp = np.zeros_like(err)
            for s, (th, tab) in enumerate(tabs):
                K = cross_gram(KernelSpec(kind, t, th), base.inputs, threads=cfg["threads"])
                for k, w in enumerate(ws):
                    data = make_sine_dataset(cfg["points"], w, cfg["b"], cfg["data_seed"])
                    err[s, k] = fit_and_score(K, data, cfg["folds"], cv_seed=cfg["data_seed"])["misclassification"]
                    amp[s, k] = tab.amplitude(w, -w)
            for k, w in enumerate(ws):
                rows.append({"kernel": kind, "family": cfg["family"], "n": n, "L": L, "w": w, "b": cfg["b"],
                             "misclassification_mean": float(err[:, k].mean()),
                             "misclassification_std": float(err[:, k].std()),
                             "abs_c_w_minus_w": float(amp[:, k].mean()),
                             "circuit_hash": t.descriptor_hash(), "seed": cfg["seed"],
                             "data_seed": cfg["data_seed"]})
            corr[f"{kind}/L={L}"] = analysis.spearman(amp.mean(axis=0), 1.0 - err.mean(axis=0))
    rows.sort(key=lambda r: (r["kernel"], r["L"], r["w"]))
    return ExperimentReport(cfg, rows, {"spearman_amplitude_vs_accuracy": corr},
                            {"wall_seconds": time.time() - t0})


def run_geodiff(cfg: dict) -> ExperimentReport:
    """Geometric differences on standardized synthetic Gaussian inputs."""
    t0 = time.time()
    for n in cfg["n_values"]:
        check_resources(n, cfg["points"])
    rows = []
    N = cfg["points"]
    eye = np.eye(N)
    pairs = {
        "ALDQFK||Fidelity": lambda F, A: (F, A),
        "Identity||Fidelity": lambda F, A: (eye, F),
        "Identity||ALDQFK": lambda F, A: (eye, A),
    }
    for n in cfg["n_values"]:
        t = _template(cfg["family"], n, cfg["L"], cfg.get("m"), cfg["structure_seed"])
        res = {k: [] for k in pairs}
        for trial in range(cfg["trials"]):
            X = _rng(cfg, _DATA, n, trial).standard_normal((N, t.n_features))
            X = (X - X.mean(axis=0)) / X.std(axis=0)
            th = sample_angles(_rng(cfg, _THETA, n, trial), t.n_params)
            F = gram_matrix(KernelSpec("Fidelity", t, th), X, threads=cfg["threads"])
            A = gram_matrix(KernelSpec("ALDQFKNormalized", t, th), X, threads=cfg["threads"])
            for name, pick in pairs.items():
                Ka, Kb = pick(F.entries, A.entries)
                res[name].append(analysis.geometric_difference(Ka, Kb, cfg["eigen_floor"]))
        for name, lst in res.items():
            g = np.array([r.normalized for r in lst])
            rows.append({"comparison": name, "family": cfg["family"], "n": n, "points": N,
                         "g_over_sqrt_n_mean": float(g.mean()), "g_over_sqrt_n_std": float(g.std()),
                         "g_mean": float(np.mean([r.g for r in lst])),
                         "discarded_eigenvalues_max": int(max(r.discarded for r in lst)),
                         "synthetic_inputs": True, "circuit_hash": t.descriptor_hash(), "seed": cfg["seed"]})
    rows.sort(key=lambda r: (r["comparison"], r["n"]))
    return ExperimentReport(cfg, rows, {"inputs": "synthetic standardized Gaussian stand-in for image features"},
                            {"wall_seconds": time.time() - t0})


def run_moments(cfg: dict) -> ExperimentReport:
    t0 = time.time()
    rows = []
    for d in cfg["dims"]:
        for r in haar.moment_battery(d, cfg["samples"], int(_rng(cfg, _MC, d).integers(2**63))):
            rows.append({"group": "moment", **r.to_dict()})
    cs, nb = cfg["closure_samples"], cfg["jackknife_batches"]
    for n in cfg["fidelity_n"]:
        r = haar.fidelity_closure(n, cs, _rng(cfg, _MC, 100, n), nb)
        rows.append({"group": "fidelity-global", "label": f"n={n}", **r.to_dict()})
    for n in cfg["aldqfk_n"]:
        r = haar.aldqfk_global_closure(n, cs, _rng(cfg, _MC, 200, n), nb)
        rows.append({"group": "aldqfk-global", "label": f"n={n}", **r.to_dict()})
    for n in cfg["ala_n"]:
        r = haar.aldqfk_ala_closure(n, cfg["ala_m"], cfg["ala_d"], cs, _rng(cfg, _MC, 300, n), nb)
        rows.append({"group": "aldqfk-ala", "label": f"n={n}", **r.to_dict()})
    zs = [r["z"] for r in rows if r["group"] == "moment"]
    return ExperimentReport(cfg, rows, {"max_abs_z_moments": float(max(zs)) if zs else None},
                            {"wall_seconds": time.time() - t0})


RUNNERS = {"variance": run_variance, "fourier": run_fourier, "classify": run_classify,
           "geodiff": run_geodiff, "moments": run_moments}


# ---------------------------------------------------------------------------
# minimal SVG line plots


def _svg_lines(series: dict, xlabel: str, ylabel: str, width: int = 480, height: int = 320) -> str:
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if np.isfinite(y)]
    if not pts:
        return ""
    xs, ys = zip(*pts)
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    y0, y1 = min(ys), max(ys) if max(ys) > min(ys) else min(ys) + 1
    pad = 40

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">{xlabel}</text>',
           f'<text x="12" y="{height / 2}" transform="rotate(-90 12 {height / 2})" text-anchor="middle">{ylabel}</text>']
    for k, (name, (a, b)) in enumerate(series.items()):
        c = colors[k % len(colors)]
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(a, b) if np.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{c}" points="{path}"/>')
        out.append(f'<text x="{pad + 4}" y="{pad / 2 + 14 * k}" fill="{c}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
