"""Incremental semantic 3D reconstruction from posed stereo sequences.

Stages: semi-global stereo matching -> depth filtering -> semantic TSDF
fusion -> marching-cubes mesh extraction, plus evaluation metrics for
depth maps, 2D segmentations, and reconstructed geometry/semantics.
"""

__version__ = "0.1.0"
