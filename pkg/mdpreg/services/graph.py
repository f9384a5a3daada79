"""Reachability on transition support graphs."""

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph


def reaches_targets(support: np.ndarray, targets: list[int] | frozenset[int]) -> np.ndarray:
    """
    Boolean vector: entry s is True when some path along ``support[s, t]`` edges
    leads from s into ``targets`` (targets reach themselves).
    """
    num_states = support.shape[0]
    targets = np.fromiter(sorted(targets), dtype=int)
    rows, cols = np.nonzero(support)
    # reversed edges t -> s plus one hub node pointing at every target
    src = np.concatenate([cols, np.full(targets.size, num_states)])
    dst = np.concatenate([rows, targets])
    graph = sparse.csr_matrix(
        (np.ones(src.size, dtype=np.int8), (src, dst)),
        shape=(num_states + 1, num_states + 1),
    )
    order = csgraph.breadth_first_order(
        graph, num_states, directed=True, return_predecessors=False
    )
    reached = np.zeros(num_states + 1, dtype=bool)
    reached[order] = True
    return reached[:num_states]


def unabsorbed_states(support: np.ndarray, terminal_states: frozenset[int]) -> np.ndarray:
    """Sorted indices of states with no path to any terminal state."""
    return np.flatnonzero(~reaches_targets(support, terminal_states))
