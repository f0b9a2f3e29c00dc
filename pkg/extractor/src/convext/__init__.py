"""Offline exporter of VGG16 activation tensors and SIFT keypoints."""

from .formats import (
    read_keypoint_file,
    read_tensor_file,
    write_keypoint_file,
    write_tensor_file,
)
from .jobs import ExtractionJob, QueryCrop, crop_to_bbox, parse_query_crops, resize_to_max_dim, run_job
from .keypoints import detect_keypoints
from .network import LAYER_INDEX, LAYER_STRIDE, ActivationExtractor

__version__ = "0.1.0"
