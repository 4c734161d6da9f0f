"""Encoder export pipeline: runs pretrained text and media encoders over
datasets and writes EMB1 embedding files and retrieval manifests."""

__version__ = "0.1.0"
