"""SDP relaxations for bilinear programs over commuting operator variables."""
from .words import (EMPTY, LevelTooLarge, RewriteRules, enumerate_words, least_rotation,
                    word_count)
from .model import (AffineConstraint, BilinearProblem, ScalarPoint, Sense, evaluate,
                    is_feasible, problem_from_dict, validate)
from .sdp import (Certificate, SDPInstance, SolveOptions, SolveResult, Status, dual_bound,
                  solve, verify)
from .hierarchy import (CSPlusQuery, HierarchyKind, MomentEquality, build_csplus, build_new,
                        build_npa, entry_index)

__version__ = "0.1.0"
