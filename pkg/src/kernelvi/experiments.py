"""Experiment runner: wires model + posterior + estimator + optimizer,
executes the training loop, and emits metrics, traces, sample dumps and
plot data.

Configs are JSON with a ``schema_version`` field; all file formats are
plain CSV/JSON so any tool can consume them. Runs are deterministic:
identical config + seed produce byte-identical ``trace.csv`` and
``metrics.json`` (wall-clock timings live in ``timings.csv`` and the
report timestamp in ``report.json``, both excluded from that guarantee).
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .density_ratio import KernelConfig
from .models import (AmortizedDecoderModel, BlrModel, BnnRegressionModel,
                     GaussianMixtureTarget, IsotropicGaussianTarget,
                     Standardizer, load_regression_csv, make_blr_data,
                     train_test_split)
from .oracles import HmcConfig, hmc_sample
from .posteriors import (AmortizedGaussianPosterior, FactorizedBnnPosterior,
                         MeanFieldGaussian, MmnnPosterior, NoiseNetPosterior,
                         PlanarFlowPosterior)
from .vi import (KiviConfig, adaptive_contrast_step, analytic_vi_step,
                 elbo_step, optimize)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunReport",
    "run",
    "compare",
    "export_plotdata",
    "OUTPUT_ROOT_ENV",
]

OUTPUT_ROOT_ENV = "KERNELVI_OUTPUT_ROOT"
SCHEMA_VERSION = 1
KINDS = ("gmm1d", "blr2d", "bnn_regression", "amortized_ac", "estimator_bench")
METHODS = ("kivi", "analytic_vi")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


# ---------------------------------------------------------------------------
# configuration


_KIVI_DEFAULTS = {
    "n_p": 100, "n_q": 100, "m": 100,
    "lam": 0.001, "clip": 1e-8, "bandwidth": None,
    "optimizer": "adam", "learning_rate": 0.001,
    "n_iters": 1000, "epochs": None, "batch_size": None,
    "reverse_trick": True, "kl_eval_fresh": False, "kl_per_layer": False,
    "lr_schedule": None,
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    method: str = "kivi"
    output_dir: str | None = None
    n_final_samples: int = 5000
    model: dict = field(default_factory=dict)
    posterior: dict = field(default_factory=dict)
    kivi: dict = field(default_factory=dict)
    hmc: dict | None = None
    dataset: dict | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version: expected {SCHEMA_VERSION}, got {self.schema_version}")
        if self.kind not in KINDS:
            raise ConfigError(f"kind: '{self.kind}' is not one of {KINDS}")
        if self.method not in METHODS:
            raise ConfigError(f"method: '{self.method}' is not one of {METHODS}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed: must be an integer")
        if self.n_final_samples < 1:
            raise ConfigError("n_final_samples: must be >= 1")
        merged = dict(_KIVI_DEFAULTS)
        unknown = set(self.kivi) - set(_KIVI_DEFAULTS)
        if unknown:
            raise ConfigError(f"kivi: unknown keys {sorted(unknown)}")
        merged.update(self.kivi)
        self.kivi = merged
        if self.kind == "bnn_regression" and self.dataset is None:
            self.dataset = {"synthetic": "sin", "n": 200, "noise_std": 0.1}
        if self.dataset is not None and "path" in self.dataset:
            if not os.path.exists(self.dataset["path"]):
                raise ConfigError(f"dataset.path: file not found: {self.dataset['path']}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        if "kind" not in raw:
            raise ConfigError("kind: missing required field")
        allowed = {"kind", "seed", "method", "output_dir", "n_final_samples",
                   "model", "posterior", "kivi", "hmc", "dataset",
                   "schema_version"}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"config: unknown top-level keys {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as err:
            raise ConfigError(f"config: invalid JSON in {path}: {err}")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "seed": self.seed,
            "method": self.method,
            "output_dir": self.output_dir,
            "n_final_samples": self.n_final_samples,
            "model": self.model,
            "posterior": self.posterior,
            "kivi": self.kivi,
            "hmc": self.hmc,
            "dataset": self.dataset,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def kivi_config(self) -> KiviConfig:
        k = self.kivi
        return KiviConfig(
            n_p=k["n_p"], n_q=k["n_q"], m_reconstruction=k["m"],
            kernel=KernelConfig(lam=k["lam"], clip=k["clip"],
                                bandwidth=k["bandwidth"]),
            optimizer=k["optimizer"], learning_rate=k["learning_rate"],
            n_iters=k["n_iters"], batch_size=k["batch_size"], seed=self.seed,
            reverse_trick=k["reverse_trick"], kl_eval_fresh=k["kl_eval_fresh"],
            kl_per_layer=k["kl_per_layer"], lr_schedule=k["lr_schedule"])


@dataclass
class RunReport:
    kind: str
    metrics: dict
    files: dict
    config: dict
    output_dir: str
    timestamp: str
    schema_version: int = SCHEMA_VERSION

    def validate_files(self) -> None:
        for name, rel in self.files.items():
            path = os.path.join(self.output_dir, rel)
            if not os.path.exists(path):
                raise FileNotFoundError(f"report references missing file {name}: {path}")

    def save(self) -> str:
        self.validate_files()
        path = os.path.join(self.output_dir, "report.json")
        payload = {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "metrics": self.metrics,
            "files": self.files,
            "config": self.config,
            "timestamp": self.timestamp,  # volatile; excluded from determinism
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path) -> "RunReport":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(kind=raw["kind"], metrics=raw["metrics"], files=raw["files"],
                   config=raw["config"], output_dir=os.path.dirname(os.path.abspath(path)),
                   timestamp=raw.get("timestamp", ""),
                   schema_version=raw.get("schema_version", SCHEMA_VERSION))


# ---------------------------------------------------------------------------
# builders


def _build_posterior(spec: dict, latent_dim: int, rng):
    family = spec.get("family", "noise_net")
    if family == "noise_net":
        return NoiseNetPosterior(
            noise_dim=spec.get("noise_dim", latent_dim),
            hidden=spec.get("hidden", [10, 10]),
            out_dim=latent_dim, rng=rng,
            mid_noise_after=spec.get("mid_noise_after"),
            output_bias=spec.get("output_bias"))
    if family == "mmnn":
        try:
            post = MmnnPosterior(input_shape=spec["input_shape"],
                                 layer_shapes=spec["layer_shapes"], rng=rng)
        except KeyError as err:
            raise ConfigError(f"posterior: mmnn requires {err.args[0]}")
        if post.dim != latent_dim:
            raise ConfigError(
                f"posterior: mmnn output dim {post.dim} != latent dim {latent_dim}")
        return post
    if family == "mean_field":
        return MeanFieldGaussian(latent_dim,
                                 init_mean=spec.get("init_mean"),
                                 init_log_std=spec.get("init_log_std"))
    if family == "planar_flow":
        return PlanarFlowPosterior(latent_dim, spec.get("n_layers", 8), rng)
    raise ConfigError(f"posterior.family: unknown family '{family}'")


def _build_bnn_posterior(spec: dict, model: BnnRegressionModel, rng):
    layers_spec = spec.get("layers")
    samplers = []
    streams = ad.split_rng(rng, len(model.weight_shapes))
    for i, ((rows, cols), stream) in enumerate(zip(model.weight_shapes, streams)):
        block_dim = rows * cols
        if layers_spec is not None:
            ls = layers_spec[i]
        else:
            ls = {"noise_dim": 20, "hidden": [30]}
        family = ls.get("family", "noise_net")
        if family == "noise_net":
            samplers.append(NoiseNetPosterior(
                noise_dim=ls.get("noise_dim", 20),
                hidden=ls.get("hidden", [30]),
                out_dim=block_dim, rng=stream))
        elif family == "mmnn":
            samplers.append(MmnnPosterior(
                input_shape=ls.get("input_shape", [10, 10]),
                layer_shapes=ls.get("layer_shapes", [[rows, cols]]),
                rng=stream))
        else:
            raise ConfigError(f"posterior.layers[{i}].family: unknown '{family}'")
    return FactorizedBnnPosterior(samplers, model.weight_shapes)


def _write_samples_csv(path, samples: np.ndarray) -> None:
    cols = ",".join(f"z{i}" for i in range(samples.shape[1]))
    with open(path, "w") as fh:
        fh.write(cols + "\n")
        for row in samples:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_samples_csv(path) -> np.ndarray:
    return np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1,
                                       dtype=np.float64))


def _write_metrics(path, metrics: dict) -> None:
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _mode_masses(samples: np.ndarray, modes=(-3.0, 3.0), radius: float = 1.5):
    flat = samples.reshape(-1)
    frac = [float(np.mean(np.abs(flat - m) <= radius)) for m in modes]
    total = sum(frac)
    dominant = max(frac) / total if total > 0 else float("nan")
    return frac, dominant


# ---------------------------------------------------------------------------
# experiment runners


def _train(model, posterior, data_batch_fn, config: ExperimentConfig,
           kivi: KiviConfig, rng):
    method = config.method

    def step(it):
        batch = data_batch_fn(it) if data_batch_fn is not None else None
        if method == "analytic_vi":
            return analytic_vi_step(model, posterior, batch, kivi, rng)
        return elbo_step(model, posterior, batch, kivi, rng)

    params = list(posterior.parameters()) + list(model.parameters())
    return optimize(step, params, kivi)


def _run_gmm1d(config: ExperimentConfig, outdir: str):
    m = config.model
    model = GaussianMixtureTarget(means=m.get("means", [-3.0, 3.0]),
                                  stds=m.get("stds", [1.0, 1.0]),
                                  weights=m.get("weights", [0.5, 0.5]))
    rng = np.random.default_rng(config.seed)
    post_spec = dict(config.posterior)
    post_spec.setdefault("family", "noise_net")
    post_spec.setdefault("noise_dim", 2)
    post_spec.setdefault("hidden", [10, 10])
    posterior = _build_posterior(post_spec, model.latent_dim, rng)
    kivi = config.kivi_config()
    trace = _train(model, posterior, None, config, kivi, rng)

    samples = posterior.sample(config.n_final_samples, rng).samples.data
    frac, dominant = _mode_masses(samples, modes=tuple(model.means))
    metrics = {
        "mode_mass_low": frac[0],
        "mode_mass_high": frac[1],
        "dominant_mode_share": dominant,
        "initial_elbo": trace.elbo[0] if len(trace) else float("nan"),
        "final_elbo": trace.elbo[-1] if len(trace) else float("nan"),
        "final_kl": trace.kl[-1] if len(trace) else float("nan"),
        "n_samples": int(samples.shape[0]),
    }
    return trace, samples, metrics


def _run_blr2d(config: ExperimentConfig, outdir: str):
    m = config.model
    data_rng = np.random.default_rng(m.get("data_seed", 12345))
    x, y, w_true = make_blr_data(data_rng, n=m.get("n_data", 200),
                                 box=m.get("box", 5.0))
    model = BlrModel(x, y)
    rng = np.random.default_rng(config.seed)
    post_spec = dict(config.posterior)
    post_spec.setdefault("family", "noise_net")
    post_spec.setdefault("noise_dim", 2)
    post_spec.setdefault("hidden", [20, 20, 20])
    if post_spec["family"] == "noise_net":
        post_spec.setdefault("mid_noise_after", 1)
    posterior = _build_posterior(post_spec, model.latent_dim, rng)
    kivi = config.kivi_config()
    trace = _train(model, posterior, None, config, kivi, rng)

    samples = posterior.sample(config.n_final_samples, rng).samples.data
    cov = np.cov(samples.T)
    corr = float(cov[0, 1] / math.sqrt(cov[0, 0] * cov[1, 1]))
    metrics = {
        "posterior_mean": [float(v) for v in samples.mean(axis=0)],
        "posterior_cov": [[float(v) for v in row] for row in cov],
        "posterior_corr": corr,
        "true_weights": [float(v) for v in w_true],
        "final_elbo": trace.elbo[-1] if len(trace) else float("nan"),
    }
    extra_files = {}
    if config.hmc is not None:
        hmc_cfg = HmcConfig(**config.hmc)
        hmc_rng = np.random.default_rng(config.seed + 777_000)
        result = hmc_sample(model.log_joint_and_grad, model.latent_dim,
                            hmc_cfg, hmc_rng)
        hcov = np.cov(result.samples.T)
        metrics["hmc_corr"] = float(hcov[0, 1] / math.sqrt(hcov[0, 0] * hcov[1, 1]))
        metrics["hmc_mean"] = [float(v) for v in result.samples.mean(axis=0)]
        metrics["hmc_accept_rate"] = result.accept_rate
        metrics["hmc_divergences"] = result.n_divergent
        hmc_path = os.path.join(outdir, "hmc_samples.csv")
        _write_samples_csv(hmc_path, result.samples)
        extra_files["hmc_samples"] = "hmc_samples.csv"
    return trace, samples, metrics, extra_files


def _make_sin_dataset(spec: dict):
    rng = np.random.default_rng(spec.get("data_seed", 2024))
    n = spec.get("n", 200)
    noise = spec.get("noise_std", 0.1)
    x = rng.uniform(-3.0, 3.0, size=(n, 1))
    y = np.sin(x[:, 0]) + noise * rng.standard_normal(n)
    return x, y


def _run_bnn_regression(config: ExperimentConfig, outdir: str):
    ds = config.dataset
    if "path" in ds:
        x, y = load_regression_csv(ds["path"], has_header=ds.get("has_header", False))
    elif ds.get("synthetic") == "sin":
        x, y = _make_sin_dataset(ds)
    else:
        raise ConfigError("dataset: needs 'path' or synthetic == 'sin'")
    split_rng = np.random.default_rng(ds.get("split_seed", config.seed))
    x_tr, y_tr, x_te, y_te = train_test_split(x, y, split_rng,
                                              train_fraction=ds.get("train_fraction", 0.9))
    scaler = Standardizer(x_tr, y_tr)
    xs, ys = scaler.transform_x(x_tr), scaler.transform_y(y_tr)

    m = config.model
    model = BnnRegressionModel(in_dim=x.shape[1], hidden=m.get("hidden", [50]))
    rng = np.random.default_rng(config.seed)
    posterior = _build_bnn_posterior(config.posterior, model, rng)
    kivi = config.kivi_config()

    n_train = xs.shape[0]
    batch_size = kivi.batch_size or min(100, n_train)
    n_batches = math.ceil(n_train / batch_size)
    if config.kivi.get("epochs"):
        kivi.n_iters = int(config.kivi["epochs"]) * n_batches
    scale = n_train / batch_size
    batch_rng = np.random.default_rng(config.seed + 555_000)

    def batch_fn(it):
        idx = batch_rng.choice(n_train, size=batch_size, replace=False)
        return xs[idx], ys[idx], scale

    trace = _train(model, posterior, batch_fn, config, kivi, rng)

    pred_rng = np.random.default_rng(config.seed + 999_000)
    _, _, rmse, test_ll = model.predict(posterior, x_te, y_te,
                                        n_samples=m.get("n_predict_samples", 500),
                                        rng=pred_rng, scaler=scaler)
    samples = posterior.sample(config.n_final_samples, rng).samples.data
    metrics = {
        "test_rmse": rmse,
        "test_log_likelihood": test_ll,
        "final_elbo": trace.elbo[-1] if len(trace) else float("nan"),
        "gamma_shape": math.exp(model.log_a.item()),
        "gamma_rate": math.exp(model.log_b.item()),
        "n_train": int(n_train),
        "n_test": int(x_te.shape[0]),
    }
    return trace, samples, metrics


def _run_amortized_ac(config: ExperimentConfig, outdir: str):
    m = config.model
    latent_dim = m.get("latent_dim", 2)
    data_dim = m.get("data_dim", 8)
    rng = np.random.default_rng(config.seed)

    # synthetic binary data from an independently seeded generative net
    gen_rng = np.random.default_rng(m.get("data_seed", 4242))
    gen_model = AmortizedDecoderModel(latent_dim, data_dim,
                                      m.get("hidden", [16]), gen_rng,
                                      output=m.get("output", "bernoulli"))
    n_data = m.get("n_data", 512)
    z_true = gen_rng.standard_normal((n_data, latent_dim))
    logits = gen_model.decode(Tensor(z_true)).data
    if gen_model.output == "bernoulli":
        data = (gen_rng.uniform(size=logits.shape) < 1 / (1 + np.exp(-logits))).astype(float)
    else:
        data = logits + gen_rng.standard_normal(logits.shape)

    model = AmortizedDecoderModel(latent_dim, data_dim, m.get("hidden", [16]),
                                  rng, output=m.get("output", "bernoulli"))
    posterior = AmortizedGaussianPosterior(
        data_dim, config.posterior.get("hidden", [32]), latent_dim, rng,
        noise_dim=config.posterior.get("noise_dim", 8))
    kivi = config.kivi_config()
    batch_size = kivi.batch_size or 128
    batch_rng = np.random.default_rng(config.seed + 555_000)

    def step(it):
        idx = batch_rng.choice(n_data, size=batch_size, replace=False)
        return adaptive_contrast_step(model, posterior, data[idx], kivi, rng)

    params = list(posterior.parameters()) + list(model.parameters())
    trace = optimize(step, params, kivi)

    final_batch = data[batch_rng.choice(n_data, size=batch_size, replace=False)]
    z = posterior.sample_given(final_batch, rng).samples.data
    metrics = {
        "final_elbo": trace.elbo[-1] if len(trace) else float("nan"),
        "final_residual_kl": trace.kl[-1] if len(trace) else float("nan"),
        "latent_mean_norm": float(np.linalg.norm(z.mean(axis=0))),
    }
    return trace, z, metrics


def _run_estimator_bench(config: ExperimentConfig, outdir: str):
    m = config.model
    dim = m.get("dim", 2)
    model = IsotropicGaussianTarget(dim)
    rng = np.random.default_rng(config.seed)
    post_spec = dict(config.posterior)
    post_spec.setdefault("family", "noise_net")
    post_spec.setdefault("noise_dim", dim)
    post_spec.setdefault("hidden", [20, 20])
    post_spec.setdefault("output_bias", [2.0] * dim)
    posterior = _build_posterior(post_spec, dim, rng)
    kivi = config.kivi_config()
    trace = _train(model, posterior, None, config, kivi, rng)

    samples = posterior.sample(config.n_final_samples, rng).samples.data
    mean_norm = float(np.linalg.norm(samples.mean(axis=0)))
    cov_err = float(np.linalg.norm(np.cov(samples.T) - np.eye(dim), ord="fro"))
    metrics = {
        "mean_norm": mean_norm,
        "cov_frobenius_error": cov_err,
        "reverse_trick": bool(kivi.reverse_trick),
        "final_kl": trace.kl[-1] if len(trace) else float("nan"),
    }
    return trace, samples, metrics


# ---------------------------------------------------------------------------
# public entry points


def resolve_output_dir(config: ExperimentConfig, override: str | None = None) -> str:
    out = override or config.output_dir or f"runs/{config.kind}-seed{config.seed}"
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    return out


def run(config: ExperimentConfig, output_dir: str | None = None) -> RunReport:
    """Execute the configured experiment and write all artifacts.

    Raises ``ConfigError`` for invalid configs and ``RuntimeError`` when
    training aborts on a non-finite objective (partial trace preserved on
    disk either way).
    """
    outdir = resolve_output_dir(config, output_dir)
    os.makedirs(outdir, exist_ok=True)

    runners = {
        "gmm1d": _run_gmm1d,
        "blr2d": _run_blr2d,
        "bnn_regression": _run_bnn_regression,
        "amortized_ac": _run_amortized_ac,
        "estimator_bench": _run_estimator_bench,
    }
    result = runners[config.kind](config, outdir)
    if len(result) == 4:
        trace, samples, metrics, extra_files = result
    else:
        trace, samples, metrics = result
        extra_files = {}

    trace.write_csv(os.path.join(outdir, "trace.csv"))
    trace.write_timings_csv(os.path.join(outdir, "timings.csv"))
    _write_samples_csv(os.path.join(outdir, "samples.csv"), np.atleast_2d(samples))
    _write_metrics(os.path.join(outdir, "metrics.json"), metrics)
    config.to_json(os.path.join(outdir, "config.json"))

    files = {"trace": "trace.csv", "timings": "timings.csv",
             "samples": "samples.csv", "metrics": "metrics.json",
             "config": "config.json", **extra_files}
    report = RunReport(kind=config.kind, metrics=metrics, files=files,
                       config=config.to_dict(), output_dir=outdir,
                       timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"))
    report.save()
    if trace.aborted:
        raise RuntimeError(f"training aborted: {trace.abort_reason}")
    return report


def _find_report(path: str) -> str:
    if os.path.isdir(path):
        candidate = os.path.join(path, "report.json")
        if not os.path.exists(candidate):
            raise FileNotFoundError(f"no report.json in directory {path}")
        return candidate
    return path


def _flatten_metrics(metrics: dict) -> dict:
    flat = {}
    for key, value in metrics.items():
        if isinstance(value, (int, float, bool)):
            flat[key] = value
        elif isinstance(value, list) and all(isinstance(v, (int, float)) for v in value):
            for i, v in enumerate(value):
                flat[f"{key}[{i}]"] = v
    return flat


def compare(paths, out_csv: str | None = None):
    """Side-by-side metric table for >= 2 reports of the same experiment kind.

    Returns (header row, list of rows, formatted text). Raises
    ``ConfigError`` when the reports mix experiment kinds.
    """
    reports = [RunReport.load(_find_report(p)) for p in paths]
    if len(reports) < 2:
        raise ConfigError("compare: needs at least 2 reports")
    kinds = {r.kind for r in reports}
    if len(kinds) > 1:
        raise ConfigError(f"compare: mismatched experiment kinds {sorted(kinds)}")

    flats = [_flatten_metrics(r.metrics) for r in reports]
    keys = sorted(set().union(*[set(f) for f in flats]))
    labels = [os.path.basename(os.path.normpath(r.output_dir)) or f"run{i}"
              for i, r in enumerate(reports)]
    header = ["metric", *labels]
    rows = []
    for key in keys:
        rows.append([key] + [f"{f[key]!r}" if key in f else "" for f in flats])

    width = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(str(v).ljust(w) for v, w in zip(header, width))]
    for r in rows:
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(r, width)))
    text = "\n".join(lines)

    if out_csv:
        with open(out_csv, "w") as fh:
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(str(v) for v in r) + "\n")
    return header, rows, text


def export_plotdata(report_path: str, outdir: str | None = None) -> dict:
    """Write grid/histogram files for a finished run's sample dumps.

    1-D experiments get a normalized histogram plus the true density on a
    grid; 2-D experiments get the sample scatter and a log-joint contour
    grid. Returns a map of written files.
    """
    report = RunReport.load(_find_report(report_path))
    outdir = outdir or report.output_dir
    os.makedirs(outdir, exist_ok=True)
    samples_rel = report.files.get("samples")
    if samples_rel is None:
        raise FileNotFoundError("report has no samples dump")
    samples_path = os.path.join(report.output_dir, samples_rel)
    if not os.path.exists(samples_path):
        raise FileNotFoundError(f"missing samples dump: {samples_path}")
    samples = _read_samples_csv(samples_path)
    written = {}

    if report.kind == "gmm1d":
        flat = samples.reshape(-1)
        counts, edges = np.histogram(flat, bins=80)
        widths = np.diff(edges)
        density = counts / (counts.sum() * widths)
        hist_path = os.path.join(outdir, "histogram.csv")
        with open(hist_path, "w") as fh:
            fh.write("bin_left,bin_right,count,density\n")
            for le, re_, c, dnst in zip(edges[:-1], edges[1:], counts, density):
                fh.write(f"{le!r},{re_!r},{int(c)},{dnst!r}\n")
        written["histogram"] = hist_path

        mcfg = report.config.get("model", {})
        model = GaussianMixtureTarget(means=mcfg.get("means", [-3.0, 3.0]),
                                      stds=mcfg.get("stds", [1.0, 1.0]),
                                      weights=mcfg.get("weights", [0.5, 0.5]))
        grid = np.linspace(flat.min() - 2, flat.max() + 2, 801)
        dens = model.log_density_np(grid)
        grid_path = os.path.join(outdir, "true_density.csv")
        with open(grid_path, "w") as fh:
            fh.write("z,density\n")
            for z, p in zip(grid, dens):
                fh.write(f"{z!r},{p!r}\n")
        written["true_density"] = grid_path
        return written

    if report.kind in ("blr2d", "estimator_bench") and samples.shape[1] == 2:
        scatter_path = os.path.join(outdir, "scatter.csv")
        _write_samples_csv(scatter_path, samples)
        written["scatter"] = scatter_path

        lo = samples.min(axis=0) - 1.0
        hi = samples.max(axis=0) + 1.0
        g0 = np.linspace(lo[0], hi[0], 60)
        g1 = np.linspace(lo[1], hi[1], 60)
        mesh = np.array([[a, b] for a in g0 for b in g1])
        if report.kind == "blr2d":
            mcfg = report.config.get("model", {})
            data_rng = np.random.default_rng(mcfg.get("data_seed", 12345))
            x, y, _ = make_blr_data(data_rng, n=mcfg.get("n_data", 200),
                                    box=mcfg.get("box", 5.0))
            model = BlrModel(x, y)
            logp = model.log_joint_np(mesh)
        else:
            logp = -0.5 * np.sum(mesh ** 2, axis=1) - math.log(2 * math.pi)
        contour_path = os.path.join(outdir, "contour_grid.csv")
        with open(contour_path, "w") as fh:
            fh.write("z0,z1,log_joint\n")
            for (a, b), v in zip(mesh, logp):
                fh.write(f"{a!r},{b!r},{v!r}\n")
        written["contour"] = contour_path
        return written

    raise ConfigError(
        f"export_plotdata: no plot-data format defined for kind '{report.kind}' "
        f"with dimension {samples.shape[1]}")
