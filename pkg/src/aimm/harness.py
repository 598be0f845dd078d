"""Configuration-driven experiments: replicated runs, comparisons and exported artifacts.

An experiment is a single JSON document::

    {
      "name": "trimodal",
      "target": {"name": "trimodal_1d", "params": {}},
      "q0": {"kind": "gaussian", "mean": [0], "cov": [[10]]},
      "sampler": {"kind": "aimm", "iterations": 20000, "w_star": 1, "n0": 1000},
      "replications": 100,
      "base_seed": 0,
      "outputs": ["aggregate_csv"],
      "diagnostics": {"tail_events": [{"label": "x>5", "coord": 0, "threshold": 5, "below": false}]}
    }

``"samplers"`` (a list of sampler blocks) replaces ``"sampler"`` for
comparisons. Replication ``r`` (0-based) uses seed ``base_seed + r``.

Outputs go to ``out_dir`` and are written atomically. ``aggregate.csv`` holds
means and variances over replications of every statistic that does not
depend on wall time; ``timing.csv`` holds the CPU and efficiency columns.
"""

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .baselines import AgmConfig, AmhConfig, _check_cov, run_agm, run_amh, run_im, run_rwmh
from .diagnostics import DEFAULT_KL_SAMPLES, TailEvent, diagnose
from .errors import AimmError, ConfigError, EmptyMixture, UnsupportedDimension
from .mixture import DefensiveKernel
from .sampler import AimmConfig, run_aimm
from .targets import build_target
from .trace import atomic_write, fmt, write_json

log = logging.getLogger(__name__)

SAMPLER_KINDS = ("aimm", "f_aimm", "rwmh", "im", "amh", "agm")
OUTPUT_KINDS = ("trace_csv", "report_json", "aggregate_csv", "proposal_snapshot", "density_grid", "ellipse_set")
ELLIPSE_MASS = 0.75
MAX_SEED = 2 ** 64 - 1

_AIMM_KEYS = {"w_star", "log_w_star", "gamma", "tau", "kappa", "n0", "m_max", "adapt_threshold", "sigma0",
              "neighborhood_scale", "dedup_history", "threshold_batch", "threshold_every", "threshold_tail",
              "block_size", "keep_snapshots", "jitter"}
_SAMPLER_KEYS = {
    "aimm": _AIMM_KEYS,
    "f_aimm": _AIMM_KEYS,
    "im": {"block_size"},
    "rwmh": {"scale", "sigma0"},
    "amh": {"sigma0", "n0", "p_fixed", "s_d"},
    "agm": {"n_components", "init_cov"},
}
_SPEC_KEYS = {"name", "target", "q0", "sampler", "samplers", "replications", "base_seed", "outputs",
              "diagnostics", "grid", "ellipses", "description"}


# spec ----------------------------------------------------------------------------------

@dataclass
class SamplerSpec:
    kind: str
    iterations: int
    params: dict = field(default_factory=dict)
    label: str = ""


@dataclass
class ExperimentSpec:
    name: str
    target: dict
    q0: dict
    samplers: list
    replications: int = 1
    base_seed: int = 0
    outputs: list = field(default_factory=lambda: ["aggregate_csv"])
    diagnostics: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    ellipses: dict = field(default_factory=dict)

    def to_dict(self):
        doc = {
            "name": self.name,
            "target": self.target,
            "q0": self.q0,
            "samplers": [dict(kind=s.kind, iterations=s.iterations, label=s.label, **s.params)
                         for s in self.samplers],
            "replications": self.replications,
            "base_seed": self.base_seed,
            "outputs": list(self.outputs),
            "diagnostics": self.diagnostics,
        }
        if self.grid:
            doc["grid"] = self.grid
        if self.ellipses:
            doc["ellipses"] = self.ellipses
        return doc


def _require(doc, key, path):
    if key not in doc:
        raise ConfigError(f"{path}{key}", "missing required field")
    return doc[key]


def _int_field(value, path, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(path, "must be an integer")
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigError(path, f"must lie in [{lo}, {hi}]")
    return int(value)


def _parse_sampler(block, path):
    if not isinstance(block, dict):
        raise ConfigError(path, "sampler block must be an object")
    kind = _require(block, "kind", path + ".")
    if kind not in SAMPLER_KINDS:
        raise ConfigError(path + ".kind", f"unknown sampler {kind!r}; expected one of {', '.join(SAMPLER_KINDS)}")
    iterations = _int_field(_require(block, "iterations", path + "."), path + ".iterations", 0)
    params = {k: v for k, v in block.items() if k not in ("kind", "iterations", "label")}
    unknown = sorted(set(params) - _SAMPLER_KEYS[kind])
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", f"unknown field for sampler {kind!r}")
    return SamplerSpec(kind, iterations, params, block.get("label", kind))


def parse_spec(doc):
    """Validate a JSON document and return an :class:`ExperimentSpec`.

    Every problem is reported as a :class:`ConfigError` carrying the path of
    the offending field. Sampler blocks are also checked against the target
    dimension by building their configuration objects.
    """
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "experiment spec must be a JSON object")
    unknown = sorted(set(doc) - _SPEC_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown top-level field")
    target = _require(doc, "target", "")
    if not isinstance(target, dict) or "name" not in target:
        raise ConfigError("target.name", "missing required field")
    q0 = _require(doc, "q0", "")
    if "sampler" in doc and "samplers" in doc:
        raise ConfigError("samplers", "give either 'sampler' or 'samplers', not both")
    if "sampler" in doc:
        samplers = [_parse_sampler(doc["sampler"], "sampler")]
    else:
        blocks = _require(doc, "samplers", "")
        if not isinstance(blocks, list) or not blocks:
            raise ConfigError("samplers", "must be a non-empty list")
        samplers = [_parse_sampler(b, f"samplers[{i}]") for i, b in enumerate(blocks)]
    replications = _int_field(doc.get("replications", 1), "replications", 1)
    base_seed = _int_field(doc.get("base_seed", 0), "base_seed", 0, MAX_SEED)
    if base_seed + replications - 1 > MAX_SEED:
        raise ConfigError("base_seed", "base_seed + replications exceeds the 64-bit seed range")
    outputs = doc.get("outputs", ["aggregate_csv"])
    if not isinstance(outputs, list):
        raise ConfigError("outputs", "must be a list")
    for i, o in enumerate(outputs):
        if o not in OUTPUT_KINDS:
            raise ConfigError(f"outputs[{i}]", f"unknown output {o!r}")
    spec = ExperimentSpec(
        name=str(doc.get("name", target["name"])),
        target=target,
        q0=q0,
        samplers=samplers,
        replications=replications,
        base_seed=base_seed,
        outputs=list(outputs),
        diagnostics=dict(doc.get("diagnostics", {})),
        grid=dict(doc.get("grid", {})),
        ellipses=dict(doc.get("ellipses", {})),
    )
    _check_spec(spec)
    return spec


def _check_spec(spec):
    try:
        tgt = build_target(spec.target["name"], **spec.target.get("params", {}))
    except ConfigError as exc:
        raise ConfigError("target." + exc.path if not exc.path.startswith("target") else exc.path,
                          exc.message) from None
    except (TypeError, AimmError) as exc:
        raise ConfigError("target.params", str(exc)) from None
    try:
        q0 = DefensiveKernel.from_dict(spec.q0)
    except ConfigError as exc:
        raise ConfigError(exc.path, exc.message) from None
    except (KeyError, TypeError, AimmError) as exc:
        raise ConfigError("q0", str(exc)) from None
    if q0.dim != tgt.dim:
        raise ConfigError("q0", f"dimension {q0.dim} does not match target dimension {tgt.dim}")
    for i, s in enumerate(spec.samplers):
        path = "sampler" if len(spec.samplers) == 1 else f"samplers[{i}]"
        _sampler_config(s, tgt, q0, 0, path)
    _parse_tail_events(spec.diagnostics.get("tail_events", []))
    if "density_grid" in spec.outputs:
        if tgt.dim > 2:
            raise ConfigError("outputs", "density_grid needs a target of dimension 1 or 2")
        _grid_axes(spec.grid, tgt.dim)
    if "ellipse_set" in spec.outputs:
        _projection(spec.ellipses.get("projection", [0, 1]), tgt.dim)


def _parse_tail_events(blocks):
    events = []
    for i, b in enumerate(blocks):
        try:
            events.append(TailEvent(str(b["label"]), int(b["coord"]), float(b["threshold"]),
                                    bool(b.get("below", True))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"diagnostics.tail_events[{i}]", f"invalid tail event: {exc}") from None
    return events


def load_spec(path_or_preset):
    """Read a spec from a JSON file, or from a built-in preset by name."""
    if os.path.exists(path_or_preset):
        with open(path_or_preset, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    else:
        doc = load_preset(path_or_preset)
    return parse_spec(doc)


def preset_names():
    files = resources.files("aimm").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_preset(name):
    f = resources.files("aimm").joinpath("presets", f"{name}.json")
    if not f.is_file():
        raise ConfigError("<spec>", f"no such file or preset: {name!r}")
    return json.loads(f.read_text(encoding="utf-8"))


# running -----------------------------------------------------------------------------------

def _matrix(v):
    return None if v is None else np.atleast_2d(np.asarray(v, dtype=np.float64))


def _sampler_config(s, target, q0, seed, path):
    """Build the sampler configuration object, raising ConfigError on bad values."""
    p = dict(s.params)
    try:
        if s.kind in ("aimm", "f_aimm", "im"):
            if "log_w_star" in p:
                if "w_star" in p:
                    raise ConfigError(f"{path}.log_w_star", "give w_star or log_w_star, not both")
                p["w_star"] = math.exp(float(p.pop("log_w_star")))
            if p.get("n0") in ("inf", "Infinity"):
                p["n0"] = math.inf
            if s.kind == "f_aimm":
                p.setdefault("adapt_threshold", True)
            if s.kind == "im":
                p["n0"] = math.inf
            if "sigma0" in p:
                p["sigma0"] = _matrix(p["sigma0"])
            cfg = AimmConfig(iterations=s.iterations, seed=seed, **p)
            cfg.resolved(target.dim).validate(target.dim, prefix=path + ".")
            return cfg
        if s.kind == "rwmh":
            sigma0 = _matrix(p.get("sigma0")) if p.get("sigma0") is not None else q0.covariance
            scale = _matrix(p.get("scale"))
            if scale is None:
                scale = (2.38 ** 2 / target.dim) * sigma0
            return {"scale": _check_cov(scale, target.dim, path + ".scale")}
        if s.kind == "amh":
            sigma0 = _matrix(p.get("sigma0")) if p.get("sigma0") is not None else q0.covariance
            cfg = AmhConfig(sigma0=sigma0, iterations=s.iterations, n0=p.get("n0"),
                            p_fixed=p.get("p_fixed", 0.05), s_d=p.get("s_d"), seed=seed)
            return cfg.validate(target.dim, prefix=path + ".")
        if s.kind == "agm":
            cfg = AgmConfig(n_components=p.get("n_components", 10), init_center_sampler=q0,
                            iterations=s.iterations, init_cov=_matrix(p.get("init_cov")), seed=seed)
            return cfg.validate(target.dim, prefix=path + ".")
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(path + ".kind", f"unknown sampler {s.kind!r}")


def run_sampler(s, target, q0, seed):
    """Run one sampler block with the given seed and return its trace."""
    path = "sampler"
    cfg = _sampler_config(s, target, q0, seed, path)
    if s.kind in ("aimm", "f_aimm"):
        return run_aimm(target, q0, cfg, sampler_name=s.kind)
    if s.kind == "im":
        return run_aimm(target, q0, cfg, sampler_name="im")
    if s.kind == "rwmh":
        return run_rwmh(target, cfg["scale"], s.iterations, seed, q0=q0)
    if s.kind == "amh":
        return run_amh(target, cfg, q0=q0)
    return run_agm(target, cfg)


def _diagnostics_options(spec):
    opts = spec.diagnostics
    modes = opts.get("modes")
    return {
        "kl_samples": int(opts.get("kl_samples", DEFAULT_KL_SAMPLES)),
        "tail_events": _parse_tail_events(opts.get("tail_events", [])),
        "modes": None if modes is None else (np.asarray(modes[0], float), np.asarray(modes[1], float)),
        "allow_unnormalized": bool(opts.get("allow_unnormalized", False)),
        "compute_kl": bool(opts.get("kl", True)),
    }


def run_replication(spec_doc, sampler_index, r):
    """Run replication ``r`` of one sampler block. Returns ``(trace, report)``.

    Takes the spec as a plain dict so it can be shipped to worker processes.
    """
    spec = parse_spec(spec_doc)
    s = spec.samplers[sampler_index]
    target = build_target(spec.target["name"], **spec.target.get("params", {}))
    q0 = DefensiveKernel.from_dict(spec.q0)
    seed = spec.base_seed + r
    trace = run_sampler(s, target, q0, seed)
    opts = _diagnostics_options(spec)
    report = diagnose(trace, target if opts["compute_kl"] else None, kl_samples=opts["kl_samples"], seed=seed,
                      tail_events=opts["tail_events"], modes=opts["modes"],
                      allow_unnormalized=opts["allow_unnormalized"])
    return trace, report


def _job(args):
    spec_doc, si, r, out_dir, outputs, grid, ell = args
    try:
        trace, report = run_replication(spec_doc, si, r)
    except AimmError as exc:
        return si, r, None, f"{type(exc).__name__}: {exc}"
    label = spec_doc["samplers"][si].get("label") or spec_doc["samplers"][si]["kind"]
    stem = os.path.join(out_dir, f"{label}_r{r:03d}")
    if "trace_csv" in outputs:
        trace.to_csv(stem + "_trace.csv")
    if "report_json" in outputs:
        write_json(stem + "_report.json", {"summary": trace.summary(), "diagnostics": report.to_dict()})
    prop = trace.proposal if hasattr(trace.proposal, "to_dict") else None
    if prop is not None and "proposal_snapshot" in outputs:
        doc = {"final": prop.to_dict()}
        if len(trace.snapshots):
            doc.update(trace.snapshots.to_dict())
        write_json(stem + "_proposal.json", doc)
    if prop is not None and "density_grid" in outputs:
        emit_density_grid(prop, grid["axes"], grid["resolution"], stem + "_proposal_grid.csv")
    if prop is not None and "ellipse_set" in outputs and prop.n_components:
        emit_ellipses(prop, ell, stem + "_ellipses.json")
    summary = {"valid": trace.valid, "error": trace.error}
    return si, r, (report, summary), None


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    reports: dict            # label -> list of DiagnosticsReport (ordered by replication)
    failures: list           # (label, replication, message)
    files: list

    @property
    def ok(self):
        return not self.failures


def run_experiment(spec, out_dir=None, workers=1, *, replications=None, base_seed=None):
    """Run every replication of every sampler block and write the requested outputs.

    ``replications`` and ``base_seed`` override the spec's values. With
    ``workers > 1`` replications run in a process pool. Failed or invalid
    replications are listed in ``result.failures`` and flagged in
    ``failures.json``.
    """
    if replications is not None:
        spec.replications = _int_field(replications, "replications", 1)
    if base_seed is not None:
        spec.base_seed = _int_field(base_seed, "base_seed", 0, MAX_SEED)
    doc = spec.to_dict()
    parse_spec(doc)
    outputs = set(spec.outputs)
    if out_dir is None:
        outputs &= set()
        out_dir = "."
    else:
        os.makedirs(out_dir, exist_ok=True)
    grid = _grid_axes(spec.grid, None) if "density_grid" in outputs else None
    ell = _projection(spec.ellipses.get("projection", [0, 1]), None) if "ellipse_set" in outputs else None
    jobs = [(doc, si, r, out_dir, outputs, grid, ell)
            for si in range(len(spec.samplers)) for r in range(spec.replications)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]

    labels = [s.label or s.kind for s in spec.samplers]
    reports = {lab: [] for lab in labels}
    failures = []
    for si, r, payload, err in results:
        lab = labels[si]
        if err is not None:
            failures.append((lab, r, err))
            continue
        report, summary = payload
        if not summary["valid"]:
            failures.append((lab, r, summary["error"]))
        reports[lab].append(report)

    files = []
    if "aggregate_csv" in outputs:
        lam_true = spec.diagnostics.get("lambda_true")
        path = os.path.join(out_dir, "aggregate.csv")
        atomic_write(path, aggregate_csv(reports, lam_true))
        tpath = os.path.join(out_dir, "timing.csv")
        atomic_write(tpath, timing_csv(reports))
        files += [path, tpath]
    if "density_grid" in outputs:
        target = build_target(spec.target["name"], **spec.target.get("params", {}))
        path = os.path.join(out_dir, "target_grid.csv")
        emit_density_grid(target, grid["axes"], grid["resolution"], path)
        files.append(path)
    if out_dir and spec.outputs:
        write_json(os.path.join(out_dir, "failures.json"),
                   [{"sampler": lab, "replication": r, "error": e} for lab, r, e in failures])
    return ExperimentResult(spec, reports, failures, files)


# aggregation ---------------------------------------------------------------------------------

def _stat_rows(reports, lam_true):
    """Per-replication statistics that do not depend on wall time."""
    rows = []
    for rep in reports:
        row = {"M_n": rep.m_n, "ESS": rep.ess, "ACC": rep.acc,
               "KL": np.nan if rep.kl_chain is None else rep.kl_chain, "JMP": rep.jmp}
        for lab, f, ret in rep.tail_stats:
            row[f"{lab}_freq"] = f
            row[f"{lab}_ret"] = ret
        if rep.lambda_hat is not None:
            row["lambda_hat"] = rep.lambda_hat
            if lam_true is not None:
                row["lambda_sq_err"] = (rep.lambda_hat - lam_true) ** 2
        rows.append(row)
    return rows


def _mean_var(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    with np.errstate(invalid="ignore"):
        mean = float(np.mean(v))
        var = float(np.var(v, ddof=1)) if v.size > 1 else None
    return mean, var


def _cell(v):
    if v is None:
        return "NA"
    return fmt(v)


def aggregate_table(reports, lam_true=None):
    """``{label: {statistic: (mean, variance or None)}}`` over replications."""
    out = {}
    for lab, reps in reports.items():
        rows = _stat_rows(reps, lam_true)
        keys = list(rows[0]) if rows else ["M_n", "ESS", "ACC", "KL", "JMP"]
        out[lab] = {k: _mean_var([row[k] for row in rows]) for k in keys}
        out[lab]["_n"] = len(rows)
    return out


def aggregate_csv(reports, lam_true=None):
    """CSV with one row per sampler and ``<stat>_mean`` / ``<stat>_var`` columns.

    The variance column is ``NA`` when a sampler has a single replication.
    """
    table = aggregate_table(reports, lam_true)
    stats = []
    for cols in table.values():
        for k in cols:
            if k != "_n" and k not in stats:
                stats.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sampler", "replications"] + [f"{k}_{m}" for k in stats for m in ("mean", "var")])
    for lab, cols in table.items():
        row = [lab, cols["_n"]]
        for k in stats:
            mean, var = cols.get(k, (math.nan, math.nan))
            row += [_cell(mean), _cell(var)]
        w.writerow(row)
    return buf.getvalue()


def timing_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sampler", "replications", "CPU_mean", "CPU_var", "EFF_mean", "EFF_var"])
    for lab, reps in reports.items():
        cpu = _mean_var([r.cpu_seconds for r in reps])
        eff = _mean_var([r.eff for r in reps])
        w.writerow([lab, len(reps), _cell(cpu[0]), _cell(cpu[1]), _cell(eff[0]), _cell(eff[1])])
    return buf.getvalue()


# plot-ready artifacts -------------------------------------------------------------------------

def _grid_axes(grid, dim):
    axes = grid.get("axes")
    res = grid.get("resolution")
    if not axes or not isinstance(axes, list):
        raise ConfigError("grid.axes", "need a list of [low, high] ranges")
    if dim is not None and len(axes) != dim:
        raise ConfigError("grid.axes", f"need {dim} ranges, got {len(axes)}")
    for i, a in enumerate(axes):
        if len(a) != 2 or not float(a[0]) < float(a[1]):
            raise ConfigError(f"grid.axes[{i}]", "range must be [low, high] with low < high")
    if res is None or isinstance(res, bool) or not isinstance(res, int) or res < 2:
        raise ConfigError("grid.resolution", "must be an integer >= 2")
    return {"axes": [[float(a[0]), float(a[1])] for a in axes], "resolution": res}


def density_grid(obj, axes, resolution):
    """Natural-log density of ``obj`` on a regular grid.

    Returns ``(columns, values)`` with columns ``(x, log_density)`` in one
    dimension and ``(x, y, log_density)`` in two.
    """
    dim = obj.dim
    if dim > 2:
        raise UnsupportedDimension("density grids are limited to one or two dimensions")
    g = _grid_axes({"axes": axes, "resolution": resolution}, dim)
    lines = [np.linspace(lo, hi, g["resolution"]) for lo, hi in g["axes"]]
    if dim == 1:
        pts = lines[0][:, None]
    else:
        xx, yy = np.meshgrid(lines[0], lines[1], indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
    return pts, np.asarray(obj.log_density(pts), dtype=np.float64)


def emit_density_grid(obj, axes, resolution, path=None):
    """Write a density grid CSV (``x[,y],log_density``); returns the CSV text."""
    pts, vals = density_grid(obj, axes, resolution)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "log_density"] if pts.shape[1] == 1 else ["x", "y", "log_density"])
    for p, v in zip(pts, vals):
        w.writerow([fmt(c) for c in p] + [fmt(v)])
    text = buf.getvalue()
    if path is not None:
        atomic_write(path, text)
    return text


def _projection(proj, dim):
    if not isinstance(proj, (list, tuple)) or len(proj) != 2:
        raise ConfigError("ellipses.projection", "must be a pair of coordinate indices")
    i, j = proj
    if isinstance(i, bool) or isinstance(j, bool) or not isinstance(i, int) or not isinstance(j, int) or i == j:
        raise ConfigError("ellipses.projection", "must be two distinct integer indices")
    if min(i, j) < 0 or (dim is not None and max(i, j) >= dim):
        raise ConfigError("ellipses.projection", f"indices out of range for dimension {dim}")
    return (i, j)


def ellipse_radius_sq(mass=ELLIPSE_MASS):
    """Squared Mahalanobis radius holding ``mass`` of a bivariate Gaussian (chi-square, 2 dof)."""
    return -2.0 * math.log(1.0 - mass)


def emit_ellipses(proposal, projection=(0, 1), path=None):
    """75%-mass ellipses of the mixture components projected on two coordinates.

    Returns a list of dicts with ``center``, ``covariance`` (2x2),
    ``radius_sq``, ``mass_level`` and normalized ``weight``.
    """
    mix = proposal.incremental_part() if hasattr(proposal, "incremental_part") else proposal
    if len(mix) == 0:
        raise EmptyMixture("proposal has no mixture components")
    i, j = _projection(list(projection), mix.dim)
    w = np.exp(mix.normalized_log_weights())
    w = w / w.sum()
    r2 = ellipse_radius_sq()
    ix = np.array([i, j])
    out = [{"center": mix.means[k, ix].tolist(),
            "covariance": mix.covariances[k][np.ix_(ix, ix)].tolist(),
            "radius_sq": r2,
            "mass_level": ELLIPSE_MASS,
            "weight": float(w[k])} for k in range(len(mix))]
    if path is not None:
        write_json(path, out)
    return out
