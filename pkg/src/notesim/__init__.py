"""notesim: query-by-example retrieval for isolated instrumental notes.

Feature extraction (constant-Q scattering, MFCC baselines), large-margin
metric learning, exact k-NN retrieval, evaluation, diffusion-map
visualization, and a CLI/HTTP service tying them together.
"""

__version__ = "0.1.0"
