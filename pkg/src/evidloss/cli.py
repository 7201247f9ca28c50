"""Command-line entry point wiring configs, verification suites, sweeps, training, and evaluation."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import metrics as metrics_mod
from . import net, synth, verify
from .gradients import beta_ratio_g, gradient_gap_f, gradient_gap_f_derivative
from .losses import LossConfig
from .net import MlpModel, TrainConfig
from .synth import SyntheticDatasetSpec

CONFIG_VERSION = "evidloss-config-v1"


class ConfigError(ValueError):
    """Config file problem; the message leads with the offending dotted key."""

    def __init__(self, key: str, detail: str = "missing or invalid"):
        super().__init__(f"{key}: {detail}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    data: SyntheticDatasetSpec
    loss: LossConfig
    train: TrainConfig
    output_dir: str
    seed: int


_LOSS_KEYS = {
    "gamma": "gamma",
    "beta": "beta",
    "lambda": "lambda_",
    "xi": "xi",
    "temperature": "temperature",
    "m_in": "m_in",
    "m_out": "m_out",
    "positive_class_weight": "positive_class_weight",
}
_TRAIN_KEYS = ("loss_kind", "learning_rate", "weight_decay", "batch_size", "epochs", "hidden_size")
_DATA_KEYS = (
    "n_id_per_class",
    "n_pseudo_ood",
    "n_true_ood",
    "class_means",
    "class_covariances",
    "pseudo_ood_mean",
    "pseudo_ood_cov",
    "true_ood_mean",
    "true_ood_cov",
)


def _require(section: dict, key: str, prefix: str):
    if key not in section:
        raise ConfigError(f"{prefix}{key}", "missing")
    return section[key]


def _check_unknown(section: dict, allowed, prefix: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown key")


def run_config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _check_unknown(raw, ("version", "seed", "output_dir", "data", "loss", "train"), "")
    if _require(raw, "version", "") != CONFIG_VERSION:
        raise ConfigError("version", f"expected {CONFIG_VERSION!r}")
    seed = int(_require(raw, "seed", ""))
    output_dir = str(_require(raw, "output_dir", ""))

    data_raw = _require(raw, "data", "")
    _check_unknown(data_raw, _DATA_KEYS, "data.")
    data_kwargs = {key: _require(data_raw, key, "data.") for key in _DATA_KEYS}
    try:
        data = SyntheticDatasetSpec(seed=seed, **data_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError("data", str(exc)) from None

    loss_raw = _require(raw, "loss", "")
    _check_unknown(loss_raw, _LOSS_KEYS, "loss.")
    loss_kwargs = {attr: _require(loss_raw, key, "loss.") for key, attr in _LOSS_KEYS.items()}
    try:
        loss = LossConfig(**loss_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError("loss", str(exc)) from None

    train_raw = _require(raw, "train", "")
    _check_unknown(train_raw, _TRAIN_KEYS, "train.")
    train_kwargs = {key: _require(train_raw, key, "train.") for key in _TRAIN_KEYS}
    try:
        train_cfg = TrainConfig(loss=loss, seed=seed, **train_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError("train", str(exc)) from None

    return RunConfig(data=data, loss=loss, train=train_cfg, output_dir=output_dir, seed=seed)


def load_run_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"not valid JSON: {exc}") from None
    return run_config_from_dict(raw)


def run_config_to_dict(cfg: RunConfig) -> dict:
    spec = cfg.data
    return {
        "version": CONFIG_VERSION,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "data": {
            "n_id_per_class": spec.n_id_per_class,
            "n_pseudo_ood": spec.n_pseudo_ood,
            "n_true_ood": spec.n_true_ood,
            "class_means": [list(m) for m in spec.class_means],
            "class_covariances": [[list(r) for r in c] for c in spec.class_covariances],
            "pseudo_ood_mean": list(spec.pseudo_ood_mean),
            "pseudo_ood_cov": [list(r) for r in spec.pseudo_ood_cov],
            "true_ood_mean": list(spec.true_ood_mean),
            "true_ood_cov": [list(r) for r in spec.true_ood_cov],
        },
        "loss": {key: getattr(cfg.loss, attr) for key, attr in _LOSS_KEYS.items()},
        "train": {key: getattr(cfg.train, key) for key in _TRAIN_KEYS},
    }


def default_run_config(seed: int = 7, output_dir: str = "runs/default") -> RunConfig:
    loss = LossConfig()
    return RunConfig(
        data=SyntheticDatasetSpec(seed=seed),
        loss=loss,
        train=TrainConfig(loss=loss, seed=seed),
        output_dir=output_dir,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_verify(args) -> int:
    report = verify.run_proposition_suite(args.suite, args.seed, args.cases)
    for sub in report.subsuites or [
        {"suite": report.suite, "total": report.total, "passes": report.passes,
         "failure_count": len(report.failures)}
    ]:
        status = "ok" if sub["failure_count"] == 0 else "FAIL"
        print(f"{sub['suite']}: {sub['passes']}/{sub['total']} passed [{status}]")
    print(f"wall time: {report.wall_time_s:.2f}s", file=sys.stderr)
    if args.out:
        Path(args.out).write_text(report.to_json())
    return 0 if report.ok else 1


def _float_list(text: str) -> list[float]:
    items = [t for t in text.split(",") if t.strip()]
    return [float(t) for t in items]


_SWEEP_EPS = 1e-6


def _cmd_sweep(args) -> int:
    alpha0s = _float_list(args.alpha0)
    gammas = _float_list(args.gamma)
    if not alpha0s or not gammas or args.pbar_steps < 2:
        raise SystemExit(2)
    rows = []
    for a0 in alpha0s:
        for g in gammas:
            if args.function == "g":
                lo, hi = _SWEEP_EPS, 1.0 - _SWEEP_EPS
            else:
                lo, hi = 1.0 / a0 + _SWEEP_EPS, 1.0 - 1.0 / a0 - _SWEEP_EPS
            if hi <= lo:
                raise ValueError(f"alpha0={a0} leaves no feasible p_bar window")
            step = (hi - lo) / (args.pbar_steps - 1)
            for i in range(args.pbar_steps):
                p_bar = lo + i * step
                if args.function == "f":
                    value = gradient_gap_f(p_bar, a0, g)
                elif args.function == "grad-gap-derivative":
                    value = gradient_gap_f_derivative(p_bar, a0, g)
                else:
                    value = beta_ratio_g(a0, p_bar * a0, g)
                rows.append((args.function, p_bar, a0, g, value))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["function", "p_bar", "alpha0", "gamma", "value"])
        for fn, p_bar, a0, g, value in rows:
            writer.writerow([fn, repr(p_bar), repr(a0), repr(g), repr(value)])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


_SCORER_FOR_KIND = {
    "uce_ent": "evidential",
    "ufce": "evidential",
    "ufce_eus_er": "evidential",
    "uce_eus_er": "evidential",
    "ce": "entropy",
    "focal": "entropy",
    "energy_bounded_ce": "energy",
    "energy_bounded_focal": "energy",
}


def _write_history_csv(history: list[dict], path) -> None:
    fields = list(history[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in history:
            writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in fields])


def _cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    out_dir = Path(args.out_dir) if args.out_dir else Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    split = synth.generate(cfg.data)
    synth.write_csv(split, out_dir / "dataset.csv")
    model, history = net.train(cfg.train, split)
    model.save(out_dir / "model.json")
    _write_history_csv(history, out_dir / "history.csv")
    scorer = _SCORER_FOR_KIND[cfg.train.loss_kind]
    report = metrics_mod.evaluate(model, split, scorer=scorer)
    (out_dir / "metrics.json").write_text(report.to_json())
    print(f"trained {cfg.train.loss_kind} for {cfg.train.epochs} epochs; "
          f"final train loss {history[-1]['train_loss']:.6f}")
    print(f"artifacts in {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    model = MlpModel.load(args.model)
    split = synth.read_csv(args.data)
    report = metrics_mod.evaluate(model, split, scorer=args.scorer)
    Path(args.out).write_text(report.to_json())
    print(f"wrote metrics to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evidloss",
        description="Dirichlet evidential losses: verification suites, sweeps, training, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run a proposition/bound verification suite")
    p_verify.add_argument("--suite", required=True, choices=verify.SUITE_NAMES + ("all",))
    p_verify.add_argument("--seed", type=int, default=7)
    p_verify.add_argument("--cases", type=int, default=None)
    p_verify.add_argument("--out", default=None, help="write the JSON report here")
    p_verify.set_defaults(fn=_cmd_verify)

    p_sweep = sub.add_parser("sweep", help="tabulate the gradient-gap or beta-ratio functions")
    p_sweep.add_argument("--function", required=True, choices=("f", "g", "grad-gap-derivative"))
    p_sweep.add_argument("--alpha0", required=True, help="comma-separated alpha0 grid")
    p_sweep.add_argument("--gamma", required=True, help="comma-separated gamma grid")
    p_sweep.add_argument("--pbar-steps", type=int, default=200)
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_train = sub.add_parser("train", help="train the toy classifier on synthetic data")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out-dir", default=None)
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved model on a dataset CSV")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--scorer", required=True, choices=metrics_mod.SCORERS)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(fn=_cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
