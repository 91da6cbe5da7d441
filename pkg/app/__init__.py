"""
homgeo - homogeneous geodesics of invariant (α,β)-metrics on homogeneous spaces
"""
