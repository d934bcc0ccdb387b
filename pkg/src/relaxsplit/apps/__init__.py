from . import cluster, lad, pgm, phase, rpca, sslr, ssp  # noqa: F401
