"""Dense linear algebra over labelled subsystems plus entropic functionals."""

from .factored import FactoredState
from .io import InputError, load_state, save_state, state_from_json, state_to_json
from .measures import (
    binary_entropy,
    conditional_entropy,
    conditional_mutual_information,
    entropic,
    entropy_bits,
    entropy_of_spectrum,
    fidelity,
    mutual_information,
    sqrtm_psd,
    trace_distance,
)
from .povm import Povm, make_ic_povm, projective_povm, random_ic_povm
from .rand import default_seed, random_density, random_isometry, random_state, random_unitary, rng
from .states import (
    IsometryMap,
    MultipartiteState,
    QuantumChannel,
    SystemDims,
    apply,
    bell_state,
    compose,
    maximally_mixed,
    partial_trace,
    permute,
    pure_state,
    purify,
    tensor,
    tensor_power,
)

__all__ = [
    "FactoredState",
    "InputError",
    "IsometryMap",
    "MultipartiteState",
    "Povm",
    "QuantumChannel",
    "SystemDims",
    "apply",
    "bell_state",
    "binary_entropy",
    "compose",
    "conditional_entropy",
    "conditional_mutual_information",
    "default_seed",
    "entropic",
    "entropy_bits",
    "entropy_of_spectrum",
    "fidelity",
    "load_state",
    "make_ic_povm",
    "maximally_mixed",
    "mutual_information",
    "partial_trace",
    "permute",
    "projective_povm",
    "pure_state",
    "purify",
    "random_density",
    "random_ic_povm",
    "random_isometry",
    "random_state",
    "random_unitary",
    "rng",
    "save_state",
    "sqrtm_psd",
    "state_from_json",
    "state_to_json",
    "tensor",
    "tensor_power",
    "trace_distance",
]
