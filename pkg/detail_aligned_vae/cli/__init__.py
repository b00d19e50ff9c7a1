"""Command-line tools for the DA-VAE pipeline."""
