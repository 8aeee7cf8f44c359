"""Provably sound region explanations for ReLU classifiers.

The toolkit encodes a feed-forward ReLU classifier into exact linear real
arithmetic, decides queries with an embedded rational simplex that returns
Farkas certificates, and turns refutations into Craig interpolants of
selectable logical strength.  On top sit explanation strategies (interpolate,
core-reduce, feature capture, abductive subsets, interval widening), region
comparison, and grid extraction for visualization.
"""

from .analysis import (ComparisonResult, Grid, aggregate, compare,
                       project_grid, relaxed_fraction, slice_grid)
from .encoding import (PartitionedSystem, build_psi, build_system,
                       domain_formula, encode_sample, partition_sample)
from .formula import (FALSE, TRUE, And, Atom, Formula, FormulaError, Or,
                      conj, count_terms, disj, evaluate, format_formula,
                      labeled_conj, make_atom, negate, parse_formula,
                      substitute, variables)
from .interpolation import (ItpAlgo, PRESETS, SatError, TheoryAlgo, combine,
                            interpolate, parse_preset, theory_itp)
from .network import (Dataset, Layer, Network, NetworkError, Point,
                      as_point, classify, forward, load_dataset,
                      load_network)
from .search import (Leaf, ProofTree, SolveResult, SolveTimeout, Split,
                     check_formula, core_labels, solve)
from .simplex import (DeltaRational, FarkasCertificate, Feasible, Infeasible,
                      Simplex, certify, lp_check)
from .strategies import (Explanation, StrategyError, abductive, capture,
                         from_sample, generalize, interval, parse_pipeline,
                         reduce, reduce_min, run_pipeline,
                         verify_explanation)

__version__ = "0.1.0"
