"""Cold-hardiness prediction for grape cultivars: multi-task recurrent
models, a Ferguson-style process baseline and an experiment harness."""

__version__ = "0.1.0"
