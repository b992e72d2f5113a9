"""Experiment runner: five penalty configurations of the constraint-learning
study over the point-mass task, with paired corruption seeds, CSV learning
curves, theta snapshots and constraint-matrix dumps.

Configs are flat ``key = value`` text files; the manifest written next to the
outputs is itself a valid config that reproduces the run byte-for-byte.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from qprl import env_pointmass as pm
from qprl.env_pointmass import NoiseModel, PointMassEnv, PointMassParams, corrupt_model
from qprl.learner import TrainSchedule, UpdateConfig, train
from qprl.mpc_structure import MaskSpec, build_banded_c
from qprl.presets import make_pointmass_theta, random_pointmass_theta
from qprl.theta_io import save_theta

CONFIG_IDS = ("fixed_constraints", "free_c", "deviation_penalty", "si_penalty", "combined")
NOISE_KINDS = ("gaussian", "brownian")
CURVE_COLUMNS = ("iteration", "J_eval", "td_error_mean", "deviation_penalty",
                 "si_penalty", "off_band_l1", "on_band_l1", "skipped_updates")

# Fixed offsets deriving auxiliary streams from the two public seeds, so a
# manifest fully determines every random draw.
_EVAL_SEED_OFFSET = 1_000_003
_UPDATE_SEED_OFFSET = 2_000_003


class ConfigError(ValueError):
    """Invalid or unparsable experiment configuration."""


@dataclass
class ExperimentConfig:
    config_id: str = "free_c"
    noise: str = "gaussian"
    c1: float = 1.0
    c2: float = 1e-4
    c3: float = 0.0
    beta: float = 1e-6
    corruption_delta: float = 0.05
    deviation_reference: str = "corrupted"   # or "true"
    cost_init: str = "matched"               # or "random" (drawn from seed_init)
    seed_env: int = 0
    seed_corruption: int = 0
    seed_init: int = 0
    seed_exploration: int = 0
    horizon: int = 10
    episodes: int = 34
    steps_per_episode: int = 20
    grad_steps_per_episode: int = 1
    log_interval: int = 5
    eval_rollouts: int = 3
    constraint_warmup_episodes: int = 8
    grad_clip: float = 1e4
    constraint_rate_end: float = 0.1
    batch_size: int = 20
    si_sample_count: int = 8
    alpha_cost: float = 1e-2
    alpha_constraint: float = 3e-6
    explore_std_start: float = 0.1
    explore_std_end: float = 0.01
    gaussian_sigma: tuple = tuple(pm.GAUSSIAN_SIGMA)
    brownian_sigma: tuple = tuple(pm.BROWNIAN_SIGMA)
    out_dir: str = ""

    def __post_init__(self):
        if self.config_id not in CONFIG_IDS:
            raise ConfigError(f"config_id must be one of {CONFIG_IDS}, got {self.config_id!r}")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"noise must be one of {NOISE_KINDS}, got {self.noise!r}")
        if self.corruption_delta < 0:
            raise ConfigError("corruption_delta must be nonnegative")
        if self.deviation_reference not in ("corrupted", "true"):
            raise ConfigError("deviation_reference must be 'corrupted' or 'true'")
        if self.cost_init not in ("matched", "random"):
            raise ConfigError("cost_init must be 'matched' or 'random'")
        for name in ("episodes", "steps_per_episode", "grad_steps_per_episode",
                     "log_interval", "eval_rollouts", "batch_size",
                     "si_sample_count", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.constraint_warmup_episodes < 0:
            raise ConfigError("constraint_warmup_episodes must be nonnegative")
        if self.grad_clip < 0:
            raise ConfigError("grad_clip must be nonnegative (0 disables)")
        if not 0.0 <= self.constraint_rate_end <= 1.0:
            raise ConfigError("constraint_rate_end must lie in [0, 1]")

    # -- derived settings -------------------------------------------------

    def train_constraints(self) -> bool:
        return self.config_id != "fixed_constraints"

    def mask_spec(self) -> MaskSpec:
        if self.config_id in ("deviation_penalty", "combined"):
            return MaskSpec(self.c1, self.c2, self.c3)
        return MaskSpec(0.0, 0.0, 0.0)

    def effective_beta(self) -> float:
        if self.config_id in ("si_penalty", "combined"):
            return self.beta
        return 0.0

    def schedule_fields(self) -> dict:
        """Fields that must agree for runs to be comparable."""
        return {name: getattr(self, name) for name in
                ("horizon", "episodes", "steps_per_episode",
                 "grad_steps_per_episode", "log_interval", "eval_rollouts")}


_CONFIG_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_value(name: str, raw: str):
    f = _CONFIG_FIELDS[name]
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    if f.type in ("tuple", tuple):
        return tuple(float(v) for v in raw.replace(",", " ").split())
    return raw


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; '#' starts a comment; blanks ignored."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def config_text(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = " ".join(f"{x:.17g}" for x in v)
        elif isinstance(v, float):
            v = f"{v:.17g}"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def save_manifest(cfg: ExperimentConfig, path, error: str | None = None) -> None:
    import numpy
    header = (f"# experiment manifest; rerunnable as a config file\n"
              f"# numpy {numpy.__version__}\n")
    tail = f"# error = {error}\n" if error else ""
    with open(path, "w") as fh:
        fh.write(header + config_text(cfg) + tail)


@dataclass
class RunArtifacts:
    out_dir: str
    curve_csv: str
    manifest_path: str
    snapshot_paths: list = field(default_factory=list)
    c_dump_paths: list = field(default_factory=list)


def _write_matrix_csv(M: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(M):
            w.writerow([f"{v:.17g}" for v in row])


def _write_curve_csv(curve: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for row in curve:
            w.writerow([row["iteration"], *(f"{row[c]:.17g}" for c in CURVE_COLUMNS[1:-1]),
                        row["skipped_updates"]])


def default_out_root() -> str:
    return os.environ.get("QPRL_OUT", os.path.join(os.getcwd(), "qprl_runs"))


def resolve_out_dir(cfg: ExperimentConfig) -> str:
    if cfg.out_dir:
        return cfg.out_dir
    name = f"{cfg.config_id}_{cfg.noise}_env{cfg.seed_env}_corr{cfg.seed_corruption}"
    return os.path.join(default_out_root(), name)


def run(cfg: ExperimentConfig) -> RunArtifacts:
    """Train one configuration and write all artifacts.

    The approximator's constraint reference is built from the corrupted
    model; the environment always uses the true dynamics.
    """
    out = resolve_out_dir(cfg)
    os.makedirs(out, exist_ok=True)
    cfg = replace(cfg, out_dir=out)
    manifest = os.path.join(out, "manifest.txt")
    artifacts = RunArtifacts(out_dir=out,
                             curve_csv=os.path.join(out, "learning_curve.csv"),
                             manifest_path=manifest)
    try:
        rng_corr = np.random.default_rng(cfg.seed_corruption)
        A_hat, B_hat = corrupt_model(pm.TRUE_A, pm.TRUE_B, cfg.corruption_delta, rng_corr)
        band_init = build_banded_c(A_hat, B_hat, cfg.horizon)
        if cfg.deviation_reference == "true":
            band_penalty = build_banded_c(pm.TRUE_A, pm.TRUE_B, cfg.horizon)
        else:
            band_penalty = band_init

        if cfg.cost_init == "matched":
            theta0 = make_pointmass_theta(band_init, np.diag(pm.COST_W), 0.0,
                                          train_constraints=cfg.train_constraints())
        else:
            theta0 = random_pointmass_theta(band_init, np.random.default_rng(cfg.seed_init),
                                            train_constraints=cfg.train_constraints())

        sigma = {"gaussian": np.asarray(cfg.gaussian_sigma),
                 "brownian": np.asarray(cfg.brownian_sigma)}[cfg.noise]
        env = PointMassEnv(PointMassParams(), NoiseModel(cfg.noise, sigma))
        eval_env = PointMassEnv(PointMassParams(), NoiseModel(cfg.noise, sigma.copy()))

        update_cfg = UpdateConfig(
            alpha_cost=cfg.alpha_cost, alpha_constraint=cfg.alpha_constraint,
            gamma=pm.GAMMA, batch_size=cfg.batch_size, mask=cfg.mask_spec(),
            beta=cfg.effective_beta(), si_sample_count=cfg.si_sample_count)
        schedule = TrainSchedule(
            episodes=cfg.episodes, steps_per_episode=cfg.steps_per_episode,
            grad_steps_per_episode=cfg.grad_steps_per_episode,
            log_interval=cfg.log_interval, eval_rollouts=cfg.eval_rollouts,
            explore_std_start=cfg.explore_std_start,
            explore_std_end=cfg.explore_std_end,
            constraint_warmup_episodes=cfg.constraint_warmup_episodes,
            grad_clip=cfg.grad_clip,
            constraint_rate_end=cfg.constraint_rate_end)

        def snapshot(ep, theta):
            tp = os.path.join(out, f"theta_{ep:05d}.txt")
            cp = os.path.join(out, f"c_matrix_{ep:05d}.csv")
            save_theta(theta, tp)
            _write_matrix_csv(theta.eq_matrix, cp)
            artifacts.snapshot_paths.append(tp)
            artifacts.c_dump_paths.append(cp)

        result = train(
            env, theta0, update_cfg, schedule, band_penalty,
            rng_env=np.random.default_rng(cfg.seed_env),
            rng_explore=np.random.default_rng(cfg.seed_exploration),
            rng_update=np.random.default_rng(cfg.seed_exploration + _UPDATE_SEED_OFFSET),
            eval_env=eval_env,
            rng_eval=np.random.default_rng(cfg.seed_env + _EVAL_SEED_OFFSET),
            snapshot_hook=snapshot)

        _write_curve_csv(result.curve, artifacts.curve_csv)
        save_manifest(cfg, manifest)
        return artifacts
    except Exception as exc:
        save_manifest(cfg, manifest, error=f"{type(exc).__name__}: {exc}")
        raise


# -- comparison across runs -----------------------------------------------

def _read_curve(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"empty learning curve: {path}")
    return rows


def _manifest_config(run_dir) -> ExperimentConfig:
    path = os.path.join(run_dir, "manifest.txt")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no manifest.txt in run directory {run_dir!r}")
    return load_config(path)


def compare(run_dirs: list, out_path: str = "summary.csv") -> str:
    """Tabulate final/tail J and band metrics per run, with pairwise
    lower-tail-J flags against every config present.

    Runs must share their schedule fields; mismatches are reported by name.
    """
    if len(run_dirs) < 1:
        raise ValueError("need at least one run directory")
    for d in run_dirs:
        if not os.path.isdir(d):
            raise FileNotFoundError(f"run directory does not exist: {d!r}")

    configs = [_manifest_config(d) for d in run_dirs]
    ref = configs[0].schedule_fields()
    for d, c in zip(run_dirs[1:], configs[1:]):
        mismatched = [k for k, v in c.schedule_fields().items() if v != ref[k]]
        if mismatched:
            raise ValueError(
                f"run {d!r} has incompatible schedule fields: {', '.join(sorted(mismatched))}")

    records = []
    for d, c in zip(run_dirs, configs):
        curve = _read_curve(os.path.join(d, "learning_curve.csv"))
        J = [float(r["J_eval"]) for r in curve]
        tail = max(1, len(J) // 4)
        records.append({
            "run_dir": d,
            "config_id": c.config_id,
            "noise": c.noise,
            "seed_env": c.seed_env,
            "seed_corruption": c.seed_corruption,
            "initial_J": J[0],
            "final_J": J[-1],
            "tail_J": float(np.mean(J[-tail:])),
            "final_off_band_l1": float(curve[-1]["off_band_l1"]),
            "final_on_band_l1": float(curve[-1]["on_band_l1"]),
        })

    present = sorted({r["config_id"] for r in records})
    best_tail = {cid: min(r["tail_J"] for r in records if r["config_id"] == cid)
                 for cid in present}
    for r in records:
        for cid in present:
            r[f"lower_tail_J_than_{cid}"] = int(r["tail_J"] < best_tail[cid])

    cols = (["run_dir", "config_id", "noise", "seed_env", "seed_corruption",
             "initial_J", "final_J", "tail_J", "final_off_band_l1",
             "final_on_band_l1"] + [f"lower_tail_J_than_{cid}" for cid in present])
    with open(out_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in records:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v)
                        for k, v in r.items()})
    return out_path
