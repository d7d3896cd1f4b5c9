"""
Panel rendering for model inputs and predictions
"""

from .renderer import PanelRenderer, render_bev_panel, render_timestep_panels, describe_outputs, write_ppm

__all__ = ['PanelRenderer', 'render_bev_panel', 'render_timestep_panels', 'describe_outputs', 'write_ppm']
