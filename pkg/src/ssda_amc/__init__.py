"""Automatic modulation classification with stacked sparse denoising autoencoders."""

__version__ = "0.1.0"
