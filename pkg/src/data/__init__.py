"""
Sensor preprocessing, the object density codec and on-disk training frames
"""

from .sensor_pipeline import (
    EgoPose, PointCloud, BevHistogram, transform_points, rasterize_bev, stack_frames,
    build_lidar_input, crop_image,
)
from .density_codec import AgentBox, encode, decode
from .dataset import FrameLabels, SensorFrame, Sample, FrameDataset, read_frame, write_frame, frame_to_sample

__all__ = [
    'EgoPose', 'PointCloud', 'BevHistogram', 'transform_points', 'rasterize_bev', 'stack_frames',
    'build_lidar_input', 'crop_image', 'AgentBox', 'encode', 'decode',
    'FrameLabels', 'SensorFrame', 'Sample', 'FrameDataset', 'read_frame', 'write_frame', 'frame_to_sample',
]
