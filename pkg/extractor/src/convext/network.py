"""VGG16 activation capture for the layers the aggregation side consumes."""

from __future__ import annotations

import numpy as np
import torch
import torchvision
from PIL import Image

# Index of each supported layer inside torchvision's vgg16().features,
# pointing at the activation *after* the layer's ReLU (pool5 is the pool
# output itself). Strides are relative to the network input.
LAYER_INDEX = {
    "conv4_1": 18,
    "conv4_2": 20,
    "conv4_3": 22,
    "conv5_1": 25,
    "conv5_2": 27,
    "conv5_3": 29,
    "pool5": 30,
}

LAYER_STRIDE = {
    "conv4_1": 8,
    "conv4_2": 8,
    "conv4_3": 8,
    "conv5_1": 16,
    "conv5_2": 16,
    "conv5_3": 16,
    "pool5": 32,
}

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class ActivationExtractor:
    """Runs images through VGG16 and returns per-layer activation grids.

    weights: "imagenet" downloads the torchvision pretrained weights,
    "random" builds a seeded randomly initialized network (deterministic,
    useful for format and shape tests), anything else is treated as a path
    to a torch state_dict for the full model or its feature stack.
    """

    def __init__(self, weights: str = "imagenet", seed: int = 0) -> None:
        if weights == "imagenet":
            model = torchvision.models.vgg16(
                weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1
            )
        elif weights == "random":
            torch.manual_seed(seed)
            model = torchvision.models.vgg16(weights=None)
        else:
            model = torchvision.models.vgg16(weights=None)
            state = torch.load(weights, map_location="cpu", weights_only=True)
            try:
                model.load_state_dict(state)
            except RuntimeError:
                model.features.load_state_dict(state)
        self.features = model.features.eval()
        for p in self.features.parameters():
            p.requires_grad_(False)
        self._max_index = max(LAYER_INDEX.values())

    @staticmethod
    def to_input(image: Image.Image) -> torch.Tensor:
        rgb = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
        rgb = (rgb - np.array(_IMAGENET_MEAN, dtype=np.float32)) / np.array(
            _IMAGENET_STD, dtype=np.float32
        )
        return torch.from_numpy(rgb.transpose(2, 0, 1))[None, :, :, :]

    def activations(self, image: Image.Image, layers: list[str]) -> dict[str, np.ndarray]:
        """Per-layer (H, W, K) float32 activation grids for one image."""
        unknown = [l for l in layers if l not in LAYER_INDEX]
        if unknown:
            raise ValueError(f"unknown layer(s) {unknown}; supported: {sorted(LAYER_INDEX)}")
        wanted = {LAYER_INDEX[l]: l for l in layers}
        out: dict[str, np.ndarray] = {}
        x = self.to_input(image)
        with torch.no_grad():
            for idx, module in enumerate(self.features):
                x = module(x)
                if idx in wanted:
                    # (1, K, H, W) -> (H, W, K)
                    out[wanted[idx]] = (
                        x[0].permute(1, 2, 0).contiguous().numpy().astype(np.float32)
                    )
                if idx >= self._max_index or len(out) == len(layers):
                    if len(out) == len(layers):
                        break
        return out
