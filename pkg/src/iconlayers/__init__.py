"""Layered decomposition of flattened vector icons.

Modules: ``svg_model`` (cubic Bezier paths, SVG I/O), ``raster`` (binary
rasterisation), ``mask_ops`` (label refinement and completion merging),
``ordering`` (exact layer ordering), ``surgery`` (curve reuse), ``trace``
(mask vectorisation), ``metrics``, ``synth`` (ground-truth scenes) and
``pipeline`` (the end-to-end chain).
"""

__version__ = "0.1.0"
