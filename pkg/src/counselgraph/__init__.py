"""Traceable graph-RAG engine for counseling copilots.

Annotated counseling sessions become a typed graph of dialogue turns and
reasoning fragments; retrieval walks that graph to assemble grounded
response candidates with full provenance.
"""

__version__ = "0.1.0"

from .graph import CotGraph, CotKind, DialogueNode, CotNode, Edge, EdgeKind, Speaker
from .index import VectorIndex, IndexKind, SearchHit, build_index, cosine_similarity
from .embedding import HashEmbedder
from .chat import StubChat, ScriptedChat

__all__ = [
    "CotGraph", "CotKind", "DialogueNode", "CotNode", "Edge", "EdgeKind",
    "Speaker", "VectorIndex", "IndexKind", "SearchHit", "build_index",
    "cosine_similarity", "HashEmbedder", "StubChat", "ScriptedChat",
    "__version__",
]
