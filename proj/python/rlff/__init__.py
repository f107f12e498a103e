"""Python bindings for the rlff pipeline core."""

from ._rlff import (
    ConfigError,
    DegenerateLabels,
    EmptyResults,
    Error,
    GroupTooSmall,
    InvalidValue,
    SchemaError,
    Scorer,
    binarize_reward,
    combined_reward,
    compute_metrics,
    critic_scalar,
    extes_split_sizes,
    format_reward,
    future_oriented_reward,
    group_advantages,
    kl_estimate,
    load_esconv,
    load_extes,
    load_scorer,
    parse_tagged,
    run_cli,
    threshold_sweep,
    train_scorer,
)

__all__ = [name for name in dir() if not name.startswith("_")]
