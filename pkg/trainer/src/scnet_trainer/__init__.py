"""SC-Net co-training harness.

Trains two segmentation+colorization network pairs on labels produced by the
``pointprop`` toolkit, exchanging EMA pseudo labels through the toolkit CLI
every few epochs.  The toolkit is used strictly as an external program: this
package reads and writes its file formats and spawns its subcommands, nothing
more.

Submodules:

* ``formats``   independent readers/writers for the toolkit's file formats
* ``config``    TrainConfig and its key=value parser
* ``model``     the residual U-Net pair (segmentation -> colorization)
* ``losses``    differentiable loss terms and the alpha/beta ramps
* ``toolkit``   subprocess wrappers around the ``pointprop`` CLI
* ``data``      synthetic corpus, sample loading, augmentation
* ``train``     prepare/train (co-training loop, checkpoints, parity dumps)
* ``infer``     patch-based inference with toolkit tiling/stitching
* ``ablation``  the four-way loss ablation
* ``cli``       the ``scnet-trainer`` command
"""

__version__ = "0.1.0"
