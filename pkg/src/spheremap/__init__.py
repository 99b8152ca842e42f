"""Surface feature counting on spheroid-like objects via equirectangular unwrapping."""

__version__ = "0.1.0"
