"""
Scenario configuration, execution and artifact output.

A configuration is a flat, line-oriented file::

    [scenario]
    kind = weak_value
    seed = 0
    output_dir = runs/anomalous

    [parameters]
    observable = z

Every parameter has a type and default in the schema of its kind; unknown
keys and type mismatches are rejected with the offending line number.
Complex values are written ``re+imj``.
"""

from __future__ import annotations

import datetime as _dt
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import action as act
from . import pointer as ptr
from . import wavefield as wf
from . import weak as wk
from .exceptions import ConfigError, WVFieldError
from .export import sha256_file, write_csv, write_field_csv, write_field_manifest, write_json
from .linalg import Constants, coherent_state, pauli

__all__ = [
    "ScenarioConfig", "RunManifest", "ScenarioResult", "SCHEMAS",
    "parse_config", "serialize_config", "load_config", "run", "sweep",
    "software_version", "resolve_output_dir", "ScenarioFailure",
]

ENV_OUT = "WVFIELD_OUT"
DEFAULT_OUT = "wvfield_out"

_C8, _S8 = math.cos(math.pi / 8), math.sin(math.pi / 8)


def _qubit(prefix, a0, a1):
    return {f"{prefix}_0": (complex, a0), f"{prefix}_1": (complex, a1)}


_GEOMETRY = {
    "slit_separation": (float, 40.0),
    "slit_width": (float, 3.0),
    "distance": (float, 200.0),
    "wavelength": (float, 1.0),
    "n_points": (int, 1024),
}

# kind -> {parameter: (type, default)}; order is the serialization order
SCHEMAS: dict[str, dict[str, tuple]] = {
    "weak_value": {
        **_qubit("pre", 1 + 0j, 1 + 0j), **_qubit("post", _C8 + 0j, -_S8 + 0j),
        "observable": (str, "z"),
    },
    "eq6_check": {
        **_qubit("pre", 1 + 0j, 1 + 0j), **_qubit("post", 1 + 0j, complex(0, -1)),
        "perturbation": (str, "z"), "hbar": (float, 1.0),
        "g_max": (float, 0.1), "n_g": (int, 5), "tolerance": (float, 1e-6),
    },
    "eq7_check": {
        **_qubit("sys1_pre", 1 + 0j, 1 + 0j), **_qubit("sys1_post", _C8 + 0j, -_S8 + 0j),
        "h1": (str, "z"),
        **_qubit("sys2_pre", 1 + 0j, 1 + 0j), **_qubit("sys2_post", 1 + 0j, complex(0, -1)),
        "h2": (str, "z"),
        "step": (float, 1e-3), "hbar": (float, 1.0), "tolerance": (float, 1e-5),
    },
    "schwinger_check": {
        "n_trials": (int, 25), "dim_min": (int, 2), "dim_max": (int, 16),
        "slices_min": (int, 1), "slices_max": (int, 8), "dt": (float, 0.1),
        "hbar": (float, 1.0), "tolerance": (float, 1e-6),
    },
    "background_field": {
        "n_max": (int, 64), "omega": (float, 0.7), "alpha": (complex, 0.6 + 0.2j),
        "beta": (complex, 0.3 - 0.4j), "n_slices": (int, 20), "dt": (float, 0.05),
        "tolerance": (float, 1e-6),
    },
    "npoint": {
        "n_trials": (int, 10), "dim": (int, 6), "n_slices": (int, 5),
        "dt": (float, 0.2), "hbar": (float, 1.0), "tolerance": (float, 1e-5),
    },
    "pointer_mc": {
        **_qubit("pre", 1 + 0j, 1 + 0j), **_qubit("post", _C8 + 0j, -_S8 + 0j),
        "observable": (str, "z"), "g": (float, 0.1), "sigma": (float, 1.0),
        "n_points": (int, 1024), "n_shots": (int, 100000), "write_shots": (int, 0),
    },
    "two_slit_streamlines": {
        **_GEOMETRY, "n_frames": (int, 41), "n_seeds": (int, 1000),
        "dt": (float, 0.5), "tv_limit": (float, 0.05),
    },
    "probe_vs_weak": {
        **_GEOMETRY, "shots": (int, 1000000), "nodes_per_bin": (int, 4),
        "n_bins": (int, 64), "n_probes": (int, 10), "g": (float, 0.2),
        "pointer_sigma": (float, 1.0), "efficiency": (float, 6e-3),
    },
    "direct_state": {
        "n_nodes": (int, 64), "width": (float, 3.0), "k0": (float, 0.0),
        "g": (float, 0.2), "shots": (int, 0), "fidelity_target": (float, 0.999),
    },
    "weak_trajectory": {
        "omega": (float, 0.3), "alpha": (complex, 1 + 0j), "beta": (complex, 1 + 0j),
        "n_max": (int, 64), "dt": (float, 1e-3), "duration": (float, 1.0),
        "mass": (float, 1.0), "tolerance": (float, 1e-8),
    },
    "legendre_check": {
        "n_max": (int, 16), "omega": (float, 0.8), "n_slices": (int, 6),
        "dt": (float, 0.1), "alpha": (complex, 0.5 + 0j), "beta": (complex, 0.2 + 0.3j),
        "j_scale": (float, 0.5), "site_a": (int, 1), "site_b": (int, 4),
    },
}

_SCENARIO_KEYS = ("kind", "seed", "output_dir")


# --- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = ""

    def with_updates(self, seed=None, output_dir=None, **params) -> "ScenarioConfig":
        merged = dict(self.parameters)
        for k, v in params.items():
            merged[k] = _coerce(self.kind, k, v)
        return ScenarioConfig(self.kind, merged,
                              self.seed if seed is None else int(seed),
                              self.output_dir if output_dir is None else str(output_dir))


def _parse_scalar(kind_type, text, key, line):
    try:
        if kind_type is int:
            if not _looks_int(text):
                raise ValueError
            return int(text)
        if kind_type is float:
            return float(text)
        if kind_type is complex:
            return complex(text.replace(" ", ""))
        return text
    except ValueError:
        raise ConfigError(f"{key!r} expects {kind_type.__name__}, got {text!r}", line) from None


def _looks_int(text):
    t = text.strip()
    return t.lstrip("+-").isdigit()


def _coerce(kind, key, value, line=None):
    schema = SCHEMAS[kind]
    if key not in schema:
        raise ConfigError(f"unknown key {key!r} for scenario kind {kind!r}", line)
    typ = schema[key][0]
    if isinstance(value, str):
        return _parse_scalar(typ, value.strip(), key, line)
    if typ is int and not (isinstance(value, (int, np.integer)) and not isinstance(value, bool)):
        raise ConfigError(f"{key!r} expects int, got {value!r}", line)
    if typ is str:
        raise ConfigError(f"{key!r} expects str, got {value!r}", line)
    return typ(value)


def parse_config(text: str) -> ScenarioConfig:
    """Strict parse; defaults fill absent parameters."""
    section = None
    scenario: dict = {}
    params: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"malformed section header {stripped!r}", lineno)
            section = stripped[1:-1].strip()
            if section not in ("scenario", "parameters"):
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", lineno)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if section is None:
            raise ConfigError(f"key {key!r} outside any section", lineno)
        target = scenario if section == "scenario" else params
        if key in target:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        target[key] = value
        lines[(section, key)] = lineno

    for key in scenario:
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"unknown key {key!r} in [scenario]", lines[("scenario", key)])
    kind = scenario.get("kind")
    if kind is None:
        raise ConfigError("missing 'kind' in [scenario]")
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown scenario kind {kind!r}", lines[("scenario", "kind")])
    seed_text = scenario.get("seed", "0")
    if not _looks_int(seed_text):
        raise ConfigError(f"'seed' expects int, got {seed_text!r}", lines.get(("scenario", "seed")))
    parsed = {k: default for k, (_, default) in SCHEMAS[kind].items()}
    for key, value in params.items():
        parsed[key] = _coerce(kind, key, value, lines[("parameters", key)])
    return ScenarioConfig(kind, parsed, int(seed_text), scenario.get("output_dir", ""))


def _format(value) -> str:
    if isinstance(value, complex):
        return f"{value.real!r}{'+' if value.imag >= 0 or math.isnan(value.imag) else ''}{value.imag!r}j"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical text: every schema parameter in schema order."""
    out = ["[scenario]", f"kind = {cfg.kind}", f"seed = {cfg.seed}"]
    if cfg.output_dir:
        out.append(f"output_dir = {cfg.output_dir}")
    out += ["", "[parameters]"]
    for key in SCHEMAS[cfg.kind]:
        out.append(f"{key} = {_format(cfg.parameters[key])}")
    return "\n".join(out) + "\n"


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


# --- runner ---------------------------------------------------------------------

class ScenarioResult(NamedTuple):
    passed: bool
    outputs: list
    summary: dict


class ScenarioFailure(WVFieldError):
    """A module error raised while running a scenario, with its context."""


def software_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        from . import __version__
        return __version__


def resolve_output_dir(cfg: ScenarioConfig, override=None) -> Path:
    if override:
        return Path(override)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(ENV_OUT, DEFAULT_OUT)) / cfg.kind


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    config: dict
    config_text: str
    software_version: str
    seed: int
    started: str
    finished: str | None = None
    status: str = "running"
    outputs: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def as_dict(self) -> dict:
        return {
            "config": self.config, "config_text": self.config_text,
            "software_version": self.software_version, "seed": self.seed,
            "started": self.started, "finished": self.finished,
            "status": self.status, "outputs": self.outputs,
            "summary": self.summary, "runs": self.runs, "error": self.error,
            "python": platform.python_version(), "numpy": np.__version__,
        }

    def write(self, directory) -> Path:
        return write_json(Path(directory) / "manifest.json", self.as_dict())


def _config_dict(cfg):
    return {"kind": cfg.kind, "seed": cfg.seed, "output_dir": cfg.output_dir,
            "parameters": dict(cfg.parameters)}


def _checksums(paths, root):
    return {str(Path(p).relative_to(root)): sha256_file(p) for p in sorted(paths)}


def run(cfg: ScenarioConfig, out_dir=None) -> RunManifest:
    """Execute one scenario; the manifest is written before and after."""
    root = resolve_output_dir(cfg, out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(_config_dict(cfg), serialize_config(cfg), software_version(),
                           cfg.seed, _now())
    manifest.write(root)
    try:
        result = RUNNERS[cfg.kind](cfg.parameters, cfg.seed, root)
    except WVFieldError as exc:
        manifest.status, manifest.error, manifest.finished = "error", str(exc), _now()
        manifest.write(root)
        raise ScenarioFailure(f"scenario {cfg.kind!r}: {type(exc).__name__}: {exc}") from exc
    manifest.outputs = _checksums(result.outputs, root)
    manifest.summary = result.summary
    manifest.status = "pass" if result.passed else "fail"
    manifest.finished = _now()
    manifest.write(root)
    return manifest


def _sub_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint32)[0])


def sweep(cfg: ScenarioConfig, parameter: str, values, out_dir=None) -> RunManifest:
    """Run one sub-scenario per value; summaries tabulated in ``sweep.csv``."""
    if parameter not in SCHEMAS[cfg.kind]:
        raise ConfigError(f"unknown sweep parameter {parameter!r} for {cfg.kind!r}")
    values = [_coerce(cfg.kind, parameter, v) for v in values]
    if not values:
        raise ConfigError("sweep needs at least one value")
    root = resolve_output_dir(cfg, out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(_config_dict(cfg), serialize_config(cfg), software_version(),
                           cfg.seed, _now())
    manifest.summary = {"parameter": parameter, "values": values}
    manifest.write(root)
    rows, outputs, all_pass = [], [], True
    for i, value in enumerate(values):
        sub = cfg.with_updates(seed=_sub_seed(cfg.seed, i), **{parameter: value})
        sub_dir = root / f"run_{i:03d}"
        try:
            result = RUNNERS[cfg.kind](sub.parameters, sub.seed, sub_dir)
        except WVFieldError as exc:
            manifest.status, manifest.error, manifest.finished = "error", str(exc), _now()
            manifest.write(root)
            raise ScenarioFailure(f"scenario {cfg.kind!r} ({parameter}={value!r}): "
                                  f"{type(exc).__name__}: {exc}") from exc
        all_pass &= result.passed
        outputs += result.outputs
        rows.append({parameter: value, "seed": sub.seed, "passed": result.passed,
                     **result.summary})
        manifest.runs.append({"index": i, "value": value, "seed": sub.seed,
                              "dir": sub_dir.name, "passed": result.passed})
    header = list(rows[0])
    for r in rows[1:]:
        header += [k for k in r if k not in header]
    table = root / "sweep.csv"
    write_csv(table, _split_complex_header(header, rows),
              (_split_complex_row(header, r) for r in rows))
    outputs.append(table)
    manifest.outputs = _checksums(outputs, root)
    manifest.status = "pass" if all_pass else "fail"
    manifest.finished = _now()
    manifest.write(root)
    return manifest


def _split_complex_header(header, rows):
    out = []
    for h in header:
        if any(isinstance(r.get(h), complex) for r in rows):
            out += [f"re_{h}", f"im_{h}"]
        else:
            out.append(h)
    return out


def _split_complex_row(header, row):
    out = []
    for h in header:
        v = row.get(h)
        if isinstance(v, complex):
            out += [v.real, v.imag]
        else:
            out.append(v)
    return out


# --- scenario implementations --------------------------------------------------

def _state(p, prefix):
    return np.array([p[f"{prefix}_0"], p[f"{prefix}_1"]], dtype=complex)


def _random_hermitian(rng, dim, scale=1.0):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * (m + m.conj().T) / 2


def _random_ket(rng, dim):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _run_weak_value(p, seed, out):
    r = wk.weak_value(_state(p, "pre"), _state(p, "post"), pauli(p["observable"]))
    path = write_json(out / "result.json", {
        "re": r.value.real, "im": r.value.imag,
        "overlap_mag": float(r.overlap_mag), "conditioned": r.conditioned})
    return ScenarioResult(bool(r.conditioned), [path],
                          {"re": r.value.real, "im": r.value.imag})


def _run_eq6(p, seed, out):
    hbar = p["hbar"]
    P = pauli(p["perturbation"])
    post = _state(p, "post")
    proc = wk.TimeSlicedProcess.trivial(2, constants=Constants(hbar=hbar))
    w, v = P.eigh
    rows, worst = [], 0.0
    for g in np.linspace(-p["g_max"], p["g_max"], p["n_g"]):
        pre_g = v @ (np.exp(1j * g * w / hbar) * (v.conj().T @ _state(p, "pre")))
        chk = wk.log_prob_derivative_check(pre_g, post, proc, P)
        ln_p = math.log(wk.postselect_probability(pre_g, post, proc, 0.0, P))
        rows.append([float(g), ln_p, chk.analytic, chk.numeric, chk.abs_err])
        worst = max(worst, chk.rel_err)
    path = write_csv(out / "eq6.csv", ["g", "ln_p", "analytic_slope", "fd_slope", "abs_err"], rows)
    passed = worst < p["tolerance"]
    summ = write_json(out / "summary.json", {"max_rel_err": worst, "pass": passed})
    return ScenarioResult(passed, [path, summ], {"max_rel_err": worst})


def _run_eq7(p, seed, out):
    lhs, rhs = ptr.product_split_check(
        _state(p, "sys1_pre"), _state(p, "sys1_post"), pauli(p["h1"]),
        _state(p, "sys2_pre"), _state(p, "sys2_post"), pauli(p["h2"]),
        g=p["step"], hbar=p["hbar"])
    err = abs(lhs - rhs)
    passed = err < p["tolerance"]
    path = write_json(out / "result.json", {"lhs": lhs, "rhs": rhs, "abs_err": err, "pass": passed})
    return ScenarioResult(passed, [path], {"lhs": lhs, "rhs": rhs, "abs_err": err})


def _random_process(rng, dim, n_slices, dt, hbar):
    hams = [_random_hermitian(rng, dim) for _ in range(n_slices)]
    return wk.TimeSlicedProcess(tuple(hams), dt, _random_hermitian(rng, dim),
                                constants=Constants(hbar=hbar))


def _run_schwinger(p, seed, out):
    rng = np.random.default_rng(seed)
    rows, worst = [], 0.0
    for trial in range(p["n_trials"]):
        dim = int(rng.integers(p["dim_min"], p["dim_max"] + 1))
        n = int(rng.integers(p["slices_min"], p["slices_max"] + 1))
        proc = _random_process(rng, dim, n, p["dt"], p["hbar"])
        pre, post = _random_ket(rng, dim), _random_ket(rng, dim)
        dH = [_random_hermitian(rng, dim) for _ in range(n)]
        chk = wk.action_derivative_check(pre, post, proc, dH)
        worst = max(worst, chk.rel_err)
        rows.append([trial, dim, n, chk.analytic, chk.numeric, chk.rel_err])
    path = write_csv(out / "schwinger.csv",
                     ["trial", "dim", "n_slices", "re_analytic", "im_analytic",
                      "re_fd", "im_fd", "rel_err"],
                     ([r[0], r[1], r[2], r[3].real, r[3].imag, r[4].real, r[4].imag, r[5]]
                      for r in rows))
    passed = worst < p["tolerance"]
    return ScenarioResult(passed, [path], {"max_rel_err": worst})


def _run_background(p, seed, out):
    n_max = p["n_max"]
    pre, post = coherent_state(p["alpha"], n_max), coherent_state(p["beta"], n_max)
    n, dt = p["n_slices"], p["dt"]
    times = dt * np.arange(1, n + 1)
    via_source = act.weak_trajectory_via_source(pre, post, p["omega"], n, dt, n_max)
    insertion = act.weak_trajectory(pre, post, p["omega"], times, n_max)
    err = np.abs(via_source - insertion)
    path = write_csv(out / "background_field.csv",
                     ["slice", "t", "re_source", "im_source", "re_insertion", "im_insertion", "abs_err"],
                     zip(range(n), times, via_source.real, via_source.imag,
                         insertion.real, insertion.imag, err))
    worst = float(err.max())
    return ScenarioResult(worst < p["tolerance"], [path], {"max_abs_err": worst})


def _run_npoint(p, seed, out):
    rng = np.random.default_rng(seed)
    rows, worst = [], 0.0
    for trial in range(p["n_trials"]):
        proc = _random_process(rng, p["dim"], p["n_slices"], p["dt"], p["hbar"])
        pre, post = _random_ket(rng, p["dim"]), _random_ket(rng, p["dim"])
        k1, k2 = sorted(int(k) for k in rng.choice(p["n_slices"], 2, replace=False))
        fd = wk.npoint_correlation(pre, post, proc, [k1, k2])
        direct = wk.time_ordered_insertion(pre, post, proc, [k1, k2])
        rel = abs(fd - direct) / max(abs(direct), 1e-300)
        worst = max(worst, rel)
        rows.append([trial, k1, k2, fd.real, fd.imag, direct.real, direct.imag, rel])
    path = write_csv(out / "npoint.csv",
                     ["trial", "k1", "k2", "re_fd", "im_fd", "re_insertion", "im_insertion", "rel_err"],
                     rows)
    return ScenarioResult(worst < p["tolerance"], [path], {"max_rel_err": worst})


def _run_pointer_mc(p, seed, out):
    pointer = ptr.gaussian_pointer(p["sigma"], p["n_points"])
    s = ptr.MeasurementScenario(_state(p, "pre"), _state(p, "post"),
                                pauli(p["observable"]), pointer, p["g"])
    wv = s.weak_value()
    re_exact, im_exact = ptr.weak_estimators(s)
    half = p["n_shots"] // 2
    pos = ptr.sample_shots(s, half, seed, "position")
    mom = ptr.sample_shots(s, p["n_shots"] - half, _sub_seed(seed, 1), "momentum")
    est = ptr.estimate_from_shots(pos + mom, p["g"], pointer)
    z_re = (est.re_est - re_exact) / est.stderr_re
    z_im = (est.im_est - im_exact) / est.stderr_im
    summary = {
        "g": p["g"], "n_shots": p["n_shots"],
        "re_weak": wv.real, "im_weak": wv.imag,
        "re_exact": re_exact, "im_exact": im_exact,
        "re_est": est.re_est, "im_est": est.im_est,
        "stderr_re": est.stderr_re, "stderr_im": est.stderr_im,
        "z_re": z_re, "z_im": z_im,
    }
    outputs = [write_csv(out / "pointer_mc.csv", list(summary), [list(summary.values())])]
    if p["write_shots"]:
        outputs.append(out / "shots.csv")
        ptr.write_shots_csv(outputs[-1], pos + mom)
    passed = abs(z_re) < 3 and abs(z_im) < 3
    return ScenarioResult(passed, outputs, summary)


def _two_slit_final(p, n_frames=2):
    return wf.two_slit_scenario(p["slit_separation"], p["slit_width"], p["distance"],
                                p["n_points"], wavelength=p["wavelength"], n_frames=n_frames)


def _run_streamlines(p, seed, out):
    frames = _two_slit_final(p, p["n_frames"])
    maps = [wf.local_momentum(f) for f in frames]
    seeds = wf.quantile_seeds(frames[0], p["n_seeds"])
    trajs = wf.streamlines(maps, seeds, p["dt"], frames[0].constants.mass)
    final = frames[-1]
    dx = final.spacing[0]
    crossings = wf.count_crossings(trajs, dx)
    ends = np.array([t.positions[-1, 0] for t in trajs])
    tv = wf.endpoint_total_variation(ends, final)
    truncated = sum(t.truncated for t in trajs)
    outputs = [
        write_field_csv(out / "final_frame.csv", final, maps[-1]),
        write_field_manifest(out / "final_frame.json", final, [seed]),
        write_csv(out / "trajectories.csv", ["trajectory", "t", "x"],
                  ((i, t, x) for i, tr in enumerate(trajs)
                   for t, x in zip(tr.times, tr.positions[:, 0]))),
    ]
    summary = {"crossings": crossings, "total_variation": tv, "truncated": truncated,
               "visibility": wf.fringe_visibility(final),
               "fringe_spacing": wf.fringe_spacing(final)}
    outputs.append(write_json(out / "summary.json", summary))
    passed = crossings == 0 and tv < p["tv_limit"] and truncated == 0
    return ScenarioResult(passed, outputs, summary)


def central_bins(fld, nodes_per_bin, n_bins):
    """Bin edges for ``n_bins`` bins of ``nodes_per_bin`` nodes centred on the grid."""
    x = fld.coords[0]
    dx = x[1] - x[0]
    start = x.size // 2 - nodes_per_bin * n_bins // 2
    if start < 0:
        raise ValueError("bins exceed the grid")
    return x[start: start + nodes_per_bin * n_bins + 1: nodes_per_bin] - dx / 2


def probe_sites(n_bins, n_probes):
    """Evenly spread bin indices for the probes."""
    return np.linspace(0, n_bins - 1, n_probes + 2)[1:-1].round().astype(int)


def _run_probe_vs_weak(p, seed, out):
    final = _two_slit_final(p)[-1]
    dx = final.spacing[0]
    edges = central_bins(final, p["nodes_per_bin"], p["n_bins"])
    centers = 0.5 * (edges[:-1] + edges[1:])
    exact = wf.weak_momentum_map(final, edges)
    weak = wf.weak_momentum_map(final, edges, shots=p["shots"], seed=seed, g=p["g"],
                                pointer_sigma=p["pointer_sigma"])
    sites = probe_sites(p["n_bins"], p["n_probes"])
    probes = wf.classical_probe_sample(final, centers[sites], p["nodes_per_bin"] * dx,
                                       p["shots"], seed=_sub_seed(seed, 1),
                                       absorption_efficiency=p["efficiency"])
    w_mean, w_se = weak.vectors[sites, 0], weak.stderr[sites]
    z = (probes.mean - w_mean) / np.sqrt(probes.stderr ** 2 + w_se ** 2)
    outputs = [write_csv(out / "probe_vs_weak.csv",
                         ["probe", "x", "probe_mean", "probe_stderr", "probe_count",
                          "weak_mean", "weak_stderr", "exact", "z"],
                         zip(range(sites.size), centers[sites], probes.mean, probes.stderr,
                             probes.counts, w_mean, w_se, exact.vectors[sites, 0], z)),
               write_csv(out / "weak_map.csv",
                         ["x", "weak_mean", "weak_stderr", "count", "exact", "bin_probability"],
                         zip(centers, weak.vectors[:, 0], weak.stderr, weak.counts,
                             exact.vectors[:, 0], exact.intensity))]
    z_map = (weak.vectors[:, 0] - exact.vectors[:, 0]) / weak.stderr
    summary = {"max_abs_z": float(np.nanmax(np.abs(z))),
               "map_fraction_within_3se": float(np.mean(np.abs(z_map) < 3)),
               "absorbed_fraction": probes.absorbed_fraction,
               "empty_probes": int(probes.empty.sum())}
    outputs.append(write_json(out / "summary.json", summary))
    passed = bool(np.all(np.abs(z) < 3)) and summary["map_fraction_within_3se"] >= 0.95
    return ScenarioResult(passed, outputs, summary)


def gaussian_nodes(n_nodes, width, k0=0.0):
    """Unit-norm Gaussian node vector with optional linear phase."""
    x = np.arange(n_nodes) - n_nodes / 2 + 0.5
    return x, wf.WaveField.from_function(
        lambda xx: np.exp(-xx ** 2 / (2 * width ** 2) + 1j * k0 * xx), (x,))


def _run_direct_state(p, seed, out):
    x, fld = gaussian_nodes(p["n_nodes"], p["width"], p["k0"])
    shots = p["shots"] or None
    res = wf.direct_state_measurement(fld, g=p["g"], shots=shots, seed=seed)
    psi = fld.amplitudes / np.linalg.norm(fld.amplitudes)
    path = write_csv(out / "direct_state.csv", ["node", "x", "re_psi", "im_psi", "re_rec", "im_rec"],
                     zip(range(x.size), x, psi.real, psi.imag,
                         res.reconstruction.real, res.reconstruction.imag))
    target = 1 - 1e-12 if shots is None else p["fidelity_target"]
    summary = {"fidelity": res.fidelity, "mode": "exact" if shots is None else "ancilla"}
    summ = write_json(out / "summary.json", summary)
    return ScenarioResult(res.fidelity >= target, [path, summ], summary)


def _run_weak_trajectory(p, seed, out):
    n = int(round(p["duration"] / p["dt"])) + 1
    k = Constants(mass=p["mass"])
    a = act.LatticeAction(n, p["dt"], p["mass"], p["omega"])
    xw = act.weak_trajectory(coherent_state(p["alpha"], p["n_max"]),
                             coherent_state(p["beta"], p["n_max"]),
                             p["omega"], a.times, p["n_max"], k)
    residual = act.classicality_check(xw, a)
    bvp = act.solve_boundary_value(a, xw[0], xw[-1])
    path_dev = float(np.max(np.abs(bvp.values - xw)))
    traj = out / "trajectory.csv"
    act.write_trajectory_csv(traj, a, xw)
    summary = {"max_residual": residual, "bvp_deviation": path_dev}
    summ = write_json(out / "summary.json", summary)
    passed = residual < p["tolerance"] and path_dev < p["tolerance"]
    return ScenarioResult(passed, [traj, summ], summary)


def _run_legendre(p, seed, out):
    H, x = act.fock_hamiltonian(p["n_max"], p["omega"])
    proc = wk.TimeSlicedProcess.constant(H, p["n_slices"], p["dt"], source_operator=x)
    rng = np.random.default_rng(seed)
    J = p["j_scale"] * rng.standard_normal(p["n_slices"])
    rep = act.legendre_check(coherent_state(p["alpha"], p["n_max"]),
                             coherent_state(p["beta"], p["n_max"]), proc, J,
                             sites=(p["site_a"], p["site_b"]))
    summary = dict(rep._asdict())
    path = write_json(out / "summary.json", {**summary, "source": J})
    passed = rep.derivative_dev < 1e-6 and rep.path_dev < 1e-5 and rep.gamma_dev < 1e-4
    return ScenarioResult(passed, [path], summary)


RUNNERS: dict[str, Callable] = {
    "weak_value": _run_weak_value,
    "eq6_check": _run_eq6,
    "eq7_check": _run_eq7,
    "schwinger_check": _run_schwinger,
    "background_field": _run_background,
    "npoint": _run_npoint,
    "pointer_mc": _run_pointer_mc,
    "two_slit_streamlines": _run_streamlines,
    "probe_vs_weak": _run_probe_vs_weak,
    "direct_state": _run_direct_state,
    "weak_trajectory": _run_weak_trajectory,
    "legendre_check": _run_legendre,
}
