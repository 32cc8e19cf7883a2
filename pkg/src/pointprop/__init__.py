"""pointprop: label propagation from point annotations for nuclei segmentation.

Submodules:

* ``core_types``        shared value types and label codes
* ``dataio``            file formats, tiling/stitching, dataset splitting
* ``stain_separation``  Beer-Lambert NMF stain unmixing
* ``coarse_labels``     Voronoi and k-means cluster label generation
* ``label_propagation`` EMA pseudo labels, merge rule, losses, schedules
* ``metrics``           pixel/object metrics and the perturbation study
* ``report``            matplotlib figure rendering
* ``pipeline``          batch end-to-end runner with manifest
* ``cli``               the ``pointprop`` command
"""

__version__ = "0.1.0"

from .core_types import (
    BACKGROUND,
    IGNORED,
    NUCLEUS,
    GrayImage,
    InstanceMap,
    PointSet,
    ProbMap,
    RgbImage,
    StainModel,
    TriLabelMap,
    validate,
)

__all__ = [
    "BACKGROUND",
    "IGNORED",
    "NUCLEUS",
    "GrayImage",
    "InstanceMap",
    "PointSet",
    "ProbMap",
    "RgbImage",
    "StainModel",
    "TriLabelMap",
    "validate",
    "__version__",
]
