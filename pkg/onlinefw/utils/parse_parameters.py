import argparse
from typing import Any, Dict, Optional, Sequence, Tuple

from ..core import ConfigError
from .logger import get_logger

logger = get_logger("Config")

# flag -> (config section, key)
FLAG_TO_CONFIG: Dict[str, Tuple[str, str]] = {
    "seed": ("Global", "seed"),
    "T": ("Global", "T"),
    "output": ("Global", "output"),
    "jobs": ("Global", "jobs"),
    "repeats": ("Global", "repeats"),
    "no_progress": ("Global", "progress"),
    "log_level": ("Global", "log_level"),
    "alg": ("Algorithm", "name"),
    "K": ("Algorithm", "K"),
    "lam": ("Algorithm", "lam"),
    "inner_steps": ("Algorithm", "inner_steps"),
    "pg_scale": ("Algorithm", "pg_scale"),
    "comparator_steps": ("Algorithm", "comparator_steps"),
    "exp": ("Experiment", "name"),
    "setting": ("Experiment", "setting"),
    "n": ("Experiment", "n"),
    "budget": ("Experiment", "budget"),
    "batch_size": ("Experiment", "batch_size"),
    "sigma": ("Experiment", "sigma"),
    "users": ("Experiment", "users"),
    "docs": ("Experiment", "docs"),
    "topics": ("Experiment", "topics"),
    "rank": ("Experiment", "rank"),
    "shape": ("Experiment", "shape"),
    "radius": ("Experiment", "radius"),
    "flow_value": ("Experiment", "flow_value"),
    "ratings_path": ("Data", "ratings_path"),
    "ratings_lo": ("Data", "ratings_lo"),
    "ratings_hi": ("Data", "ratings_hi"),
    "topics_path": ("Data", "topics_path"),
    "network_path": ("Data", "network_path"),
}

SECTIONS = ("Global", "Algorithm", "Experiment", "Data")

# section keys whose flat name differs from the key
RENAMED = {("Algorithm", "name"): "algorithm", ("Experiment", "name"): "experiment"}


def init_args(
    argv: Optional[Sequence[str]] = None,
    defaults: Optional[Dict[str, Dict[str, Any]]] = None,
    algorithms: Sequence[str] = (),
    experiments: Sequence[str] = (),
) -> argparse.Namespace:
    """Every flag defaults to None so that only flags given on the command line override the config."""
    defaults = defaults or {}

    def hint(flag: str, text: str = "") -> str:
        section, key = FLAG_TO_CONFIG[flag]
        value = defaults.get(section, {}).get(key)
        return f"{text} (default: {value})" if text else f"default: {value}"

    parser = argparse.ArgumentParser(
        prog="onlinefw",
        description="Online Frank-Wolfe benchmarks: play a stream, write the regret ledger.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment and write its regret CSV and JSON sidecar")
    run.add_argument("--config", type=str, default=None, help="YAML file layered over the shipped config.yaml")

    global_group = run.add_argument_group(title="Global")
    global_group.add_argument("--seed", type=int, default=None, help=hint("seed"))
    global_group.add_argument("--T", type=int, default=None, help=hint("T", "number of rounds"))
    global_group.add_argument("--output", type=str, default=None, help=hint("output", "CSV path"))
    global_group.add_argument("--jobs", type=int, default=None, help=hint("jobs", "threads for --repeats"))
    global_group.add_argument("--repeats", type=int, default=None, help=hint("repeats", "seeds seed..seed+R-1"))
    global_group.add_argument("--no_progress", action="store_true", default=None, help="hide the progress bar")
    global_group.add_argument("--log_level", type=str, default=None, help=hint("log_level"))

    alg_group = run.add_argument_group(title="Algorithm")
    alg_group.add_argument("--alg", type=str, default=None, help=hint("alg", " | ".join(algorithms)))
    alg_group.add_argument("--K", type=int, default=None, help=hint("K", "Meta-FW inner steps, ceil(T^1.5) when unset"))
    alg_group.add_argument("--lam", type=float, default=None, help=hint("lam", "rofw regularization, sqrt(T) when unset"))
    alg_group.add_argument("--inner_steps", type=int, default=None, help=hint("inner_steps", "rofw surrogate steps"))
    alg_group.add_argument("--pg_scale", type=float, default=None, help=hint("pg_scale", "pga step c, D/sqrt(2) when unset"))
    alg_group.add_argument(
        "--comparator_steps", type=int, default=None, help=hint("comparator_steps", "offline Frank-Wolfe steps")
    )

    exp_group = run.add_argument_group(title="Experiment")
    exp_group.add_argument("--exp", type=str, default=None, help=hint("exp", " | ".join(experiments)))
    exp_group.add_argument("--setting", type=str, default=None, help=hint("setting", "adversarial | stochastic"))
    exp_group.add_argument("--n", type=int, default=None, help=hint("n", "items / dimension"))
    exp_group.add_argument("--budget", type=float, default=None, help=hint("budget"))
    exp_group.add_argument("--batch_size", type=int, default=None, help=hint("batch_size"))
    exp_group.add_argument("--sigma", type=float, default=None, help=hint("sigma", "gradient noise"))
    exp_group.add_argument("--users", type=int, default=None, help=hint("users", "synthetic ratings"))
    exp_group.add_argument("--docs", type=int, default=None, help=hint("docs", "synthetic topics"))
    exp_group.add_argument("--topics", type=int, default=None, help=hint("topics"))
    exp_group.add_argument("--rank", type=int, default=None, help=hint("rank", "matrix completion"))
    exp_group.add_argument("--shape", type=int, nargs=2, default=None, help=hint("shape", "matrix completion"))
    exp_group.add_argument("--radius", type=float, default=None, help=hint("radius", "nuclear radius"))
    exp_group.add_argument("--flow_value", type=float, default=None, help=hint("flow_value"))

    data_group = run.add_argument_group(title="Data")
    data_group.add_argument("--ratings_path", type=str, default=None, help=hint("ratings_path"))
    data_group.add_argument("--ratings_lo", type=float, default=None, help=hint("ratings_lo"))
    data_group.add_argument("--ratings_hi", type=float, default=None, help=hint("ratings_hi"))
    data_group.add_argument("--topics_path", type=str, default=None, help=hint("topics_path"))
    data_group.add_argument("--network_path", type=str, default=None, help=hint("network_path", "edge list"))

    return parser.parse_args(argv)


class UpdateParameters:
    """
    Layer a user config file and then command-line flags over the shipped
    defaults. Overrides of a value from the user's file are logged as warnings.
    """

    def __init__(self, file_config: Optional[Dict[str, Dict[str, Any]]] = None) -> None:
        self.file_config = file_config or {}

    def __call__(self, config: Dict[str, Dict[str, Any]], /, **kwargs) -> Dict[str, Dict[str, Any]]:
        config = self.merge(config, self.file_config)
        for flag, value in kwargs.items():
            if value is None or flag not in FLAG_TO_CONFIG:
                continue
            section, key = FLAG_TO_CONFIG[flag]
            if flag == "no_progress":
                value = not value
            if isinstance(value, list):
                value = tuple(value)

            in_file = self.file_config.get(section, {}).get(key)
            if in_file is not None and in_file != value:
                logger.warning("--%s %s overrides %s.%s = %s from the config file", flag, value, section, key, in_file)
            config[section][key] = value
        return config

    @staticmethod
    def merge(base: Dict[str, Dict[str, Any]], override: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
        merged = {section: dict(base.get(section) or {}) for section in SECTIONS}
        for section, values in (override or {}).items():
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section {section!r}; expected one of {', '.join(SECTIONS)}")
            if not isinstance(values, dict):
                raise ConfigError(f"config section {section!r} must be a mapping")
            merged[section].update(values)
        return merged

    @staticmethod
    def flatten(config: Dict[str, Dict[str, Any]]) -> Dict[str, Any]:
        flat: Dict[str, Any] = {}
        for section in SECTIONS:
            for key, value in (config.get(section) or {}).items():
                flat[RENAMED.get((section, key), key)] = value
        return flat
