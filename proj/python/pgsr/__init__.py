"""Python access to the pgsr graph signal recovery library."""

from ._pgsr import (
    Filter,
    GftBasis,
    PgsrError,
    build_b1,
    config_hash,
    gft_basis,
    laplacian,
    make_operator,
    nmsd,
    random_uniform_graph,
    run_config,
    stability_bound,
    steady_state_msd,
    synth_bandlimited,
)

__all__ = [
    "Filter",
    "GftBasis",
    "PgsrError",
    "build_b1",
    "config_hash",
    "gft_basis",
    "laplacian",
    "make_operator",
    "nmsd",
    "random_uniform_graph",
    "run_config",
    "stability_bound",
    "steady_state_msd",
    "synth_bandlimited",
]
