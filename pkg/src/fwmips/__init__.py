"""Frank-Wolfe over convex hulls with sketch- and hash-based direction search."""

__version__ = "0.1.0"
