"""
Lie algebra, metric and geodesic services
"""
