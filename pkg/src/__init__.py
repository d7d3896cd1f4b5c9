"""
II-DSU desk-scale driving model
Main package initialization
"""

__version__ = "1.0.0"
__description__ = "Waypoint planning from a shared camera and LiDAR scene feature"
