"""Median oscillation decompositions on dyadic grids, with exact verification.

The package computes median-based maximal functions of grid-sampled
piecewise-constant functions, builds both local median oscillation
decompositions (the sharp-maximal-threshold variant ``v1`` and the
quantile-threshold variant ``v2``), and verifies the pointwise, sparsity,
weighted, and singular-operator estimates attached to them on reproducible
corpora, reporting the empirical constants.
"""

from .grid import (
    AlignedCube,
    AncestorOutOfRange,
    DyadicCube,
    GridError,
    GridFunction,
    RootHasNoParent,
    UnknownGenerator,
    UnsupportedDimension,
    Weight,
    ancestor,
    ancestor_or_root,
    cells_of,
    coarsen,
    generate,
    lift,
    load_function,
    parent,
    root_cube,
    save_function,
)
from .oscillation import (
    CubeClass,
    OscParams,
    SharpMaxCache,
    best_constant_osc,
    hl_map,
    hl_max,
    local_sharp_max,
    mean_sharp_map,
    mean_sharp_max,
    median,
    median_max_dyadic,
    median_max_dyadic_map,
    osc_quantile,
    sharp_map,
    sup_inf_map,
)
from .decompose import (
    DecompositionError,
    DecompositionTree,
    MaxGenerationsExceeded,
    StoppedCube,
    decompose_v1,
    decompose_v2,
    load_tree,
    save_tree,
    sparse_sets,
    verify_pointwise,
    verify_sparsity,
)
from .operators import (
    HaarShift,
    IndexTooDeep,
    LeafCube,
    apply_haar_shift,
    haar_coefficients,
    haar_function,
    hilbert_transform,
    kernel_smoothness_check,
    load_shift,
    martingale_transform,
    random_haar_shift,
    save_shift,
)
from .harness import (
    CheckReport,
    CorpusSpec,
    UnknownCheck,
    build_corpus,
    check_cz_sharp,
    check_cz_sharp_shift,
    check_decomposition,
    check_refinement,
    check_shift_domination,
    check_shift_local,
    check_weighted,
    constant_sweep,
    property_suite,
    run_check,
)

__version__ = "0.1.0"
