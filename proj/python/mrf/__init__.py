"""Python bindings for the mrf router-upcycling library."""

from ._core import (
    Checkpoint,
    ConfigError,
    DataError,
    FormatError,
    MixtureMode,
    ModelConfig,
    MoEConfig,
    MrfError,
    NumericError,
    RouterMode,
    ShapeError,
    StateError,
    TrainConfig,
    concat_rounds,
    greedy_pair,
    init_dense,
    load_checkpoint,
    lr_at,
    route,
    router_param_count,
    run_cli,
)

__all__ = [name for name in dir() if not name.startswith("_")]
