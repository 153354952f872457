"""Transgression forms on sphere bundles of manifolds with locally product collars."""
