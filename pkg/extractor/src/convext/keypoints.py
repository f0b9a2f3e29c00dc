"""SIFT keypoint detection on the resized images."""

from __future__ import annotations

import cv2
import numpy as np
from PIL import Image


def detect_keypoints(image: Image.Image) -> np.ndarray:
    """SIFT keypoint centers as (n, 2) float32 in 1-based pixel coordinates.

    OpenCV reports 0-based subpixel centers; they are shifted to the
    1-based convention and clamped into the image so downstream readers
    accept them. An image with no detections yields an empty array.
    """
    gray = np.asarray(image.convert("L"))
    detector = cv2.SIFT_create()
    found = detector.detect(gray, None)
    if not found:
        return np.zeros((0, 2), dtype=np.float32)
    pts = np.array([kp.pt for kp in found], dtype=np.float64) + 1.0
    pts[:, 0] = np.clip(pts[:, 0], 1.0, image.width)
    pts[:, 1] = np.clip(pts[:, 1], 1.0, image.height)
    order = np.lexsort((pts[:, 0], pts[:, 1]))
    return pts[order].astype(np.float32)
