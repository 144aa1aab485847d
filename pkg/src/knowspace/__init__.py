"""Composable semantic content middleware.

RDF metadata and binary content behind a small operation kernel, served by
stackable Contexts that add inference, geospatial derivation, full-text
search, and access control, exposed over an HTTP protocol with a SPARQL
subset.
"""

from knowspace.rdf import (
    ANY,
    BlankNode,
    Graph,
    IriRef,
    Literal,
    Triple,
    TriplePattern,
    Variable,
    parse_ntriples,
    serialize_ntriples,
)

__all__ = [
    "ANY",
    "BlankNode",
    "Graph",
    "IriRef",
    "Literal",
    "Triple",
    "TriplePattern",
    "Variable",
    "parse_ntriples",
    "serialize_ntriples",
]

__version__ = "0.1.0"
