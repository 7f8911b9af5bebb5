"""Video deblurring with multi-scale bidirectional recurrent propagation."""
__version__ = "0.1.0"
