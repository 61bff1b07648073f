"""H2-structured multiscale neural networks (MNN-H2) in numpy.

Subpackages and modules:

``tensor``   column-major reshapes and padding
``h2core``   index tree, H2 matrices, matvec, compression
``layers``   locally connected and convolutional layers
``model``    network assembly and parameter counting
``train``    loss, metrics, Nadam and the training loop
``pde``      1D NLSE, RTE and Kohn-Sham data generators
``formats``  dataset and checkpoint files, run configs
``cli``      the ``mnnh2`` command
"""

__version__ = "0.1.0"
