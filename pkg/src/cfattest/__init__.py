"""Control-flow attestation from execution traces with a graph autoencoder."""

__version__ = "0.1.0"
