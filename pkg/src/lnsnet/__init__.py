"""Unsupervised, non-iterative, lifelong-trained superpixel segmentation."""

__version__ = "0.1.0"
