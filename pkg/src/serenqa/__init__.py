"""Serendipity-aware knowledge-graph QA evaluation engine."""
from .embed import EmbeddingTable, load_embeddings, normalized_distance, propagate_embeddings
from .errors import *  # noqa: F401,F403
from .evalkit import aggregate, f1, hit_rate, pearson, seren_cov, seren_hit, type_match
from .explore import (BeamParams, EdgeScorer, ExplorationTrace, ExternalPolicy, HeuristicPolicy,
                      PathPolicy, beam_explore, score_edge)
from .kg import Edge, Graph, NodeRef, QaRecord, load_benchmark, load_edges
from .partition import brute_force_partition, budget, greedy_swap, initial_partition
from .pattern import PatternQuery, execute_pattern, split_graph
from .prob import ProbModel, build_transition, dense_multiply_dnc, khop_matrix, marginal
from .rns import (AnswerPartition, RnsScorer, RnsWeights, calibrate_weights, mutual_information,
                  novelty, relevance, rns_score, surprise)

__version__ = "0.1.0"
