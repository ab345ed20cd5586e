"""Underground-loader mucking simulator and RL harness (C++ core)."""

from ._core import (  # noqa: F401
    EnvConfig,
    Heightfield,
    LoaderEnv,
    PileShape,
    PileSpec,
    SoilParams,
    VehicleParams,
    default_train_config_json,
    dig_resistance,
    evaluate_scripted,
    excavate,
    generate_pile,
    load_pile,
    mpa_loading_reward,
    pile_edge_extent,
    pile_mass_tonnes,
    position_reward,
    sample_soil,
    save_pile,
    step_reward,
    terminal_bonus,
    train_from_json,
)

__all__ = [
    "EnvConfig",
    "Heightfield",
    "LoaderEnv",
    "PileShape",
    "PileSpec",
    "SoilParams",
    "VehicleParams",
    "default_train_config_json",
    "dig_resistance",
    "evaluate_scripted",
    "excavate",
    "generate_pile",
    "load_pile",
    "mpa_loading_reward",
    "pile_edge_extent",
    "pile_mass_tonnes",
    "position_reward",
    "sample_soil",
    "save_pile",
    "step_reward",
    "terminal_bonus",
    "train_from_json",
]
