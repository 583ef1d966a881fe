"""Contrastive pretraining on egocentric views paired by navigational
time/space proximity, with a built-in procedural raycast world."""

__version__ = "0.1.0"
