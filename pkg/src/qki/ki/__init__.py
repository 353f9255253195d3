"""Block decomposition of bipartite sources into classical, redundant and quantum parts."""

from .algebra import (
    AlgebraBlock,
    BlockStructure,
    Ensemble,
    MatrixAlgebra,
    decompose_algebra,
    generate_algebra,
    measure_reference,
)
from .decomposition import KIBlock, KIDecomposition, ki_decompose, reconstruct, verify
from .synth import build_clean_source, synth_ki_state

__all__ = [
    "AlgebraBlock",
    "BlockStructure",
    "Ensemble",
    "KIBlock",
    "KIDecomposition",
    "MatrixAlgebra",
    "build_clean_source",
    "decompose_algebra",
    "generate_algebra",
    "ki_decompose",
    "measure_reference",
    "reconstruct",
    "synth_ki_state",
    "verify",
]
