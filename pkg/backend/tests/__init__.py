"""
DTRformer Test Suite

Covers the tensor substrate, data pipeline, model blocks, training loop,
evaluation and command-line interface. Slow acceptance experiments live in
tests/integration and carry the ``slow`` marker.
"""

__version__ = "1.0.0"
