"""Few-shot learning of compositional visual concepts.

Scenes of polygonal objects are encoded as directed object-relation graphs;
class prototypes ("schemas") are induced by gradient-optimized analogical
mapping between graphs, and targets are classified by similarity to the
schemas. Includes a synthetic first-order relational problem generator, two
control models, and a reproducible experiment harness.
"""

__version__ = "0.1.0"

from .relgraph import (  # noqa: F401
    EdgeWeights,
    Episode,
    ObjectGraph,
    RelationVector,
    RELATION_NAMES,
    cosine_similarity,
    edge_similarity,
    graph_similarity,
    node_similarity,
)
from .model import (  # noqa: F401
    ModelConfig,
    Schema,
    TrainedModel,
    baseline_patches,
    baseline_prototype,
    classify,
    compute_schema,
    induce_schemas,
)
