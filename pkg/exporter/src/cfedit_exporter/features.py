"""Backbone loading, split-point feature extraction, and head export."""
from __future__ import annotations

import numpy as np
import torch
from PIL import Image
from torchvision import transforms
from torchvision.models import get_model
from torchvision.models.feature_extraction import create_feature_extractor

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class FeatureExtractor:
    """Runs a torchvision backbone up to a named split layer, on CPU.

    Without a weights file the model is randomly initialized from a fixed
    seed, so exports stay reproducible.
    """

    def __init__(self, model_name: str, split_layer: str, n_classes: int,
                 image_size: int = 224, weights_path=None, seed: int = 0):
        torch.manual_seed(seed)
        self.model = get_model(model_name, weights=None, num_classes=n_classes)
        if weights_path:
            state = torch.load(weights_path, map_location="cpu")
            self.model.load_state_dict(state)
        self.model.eval()
        try:
            self.extractor = create_feature_extractor(
                self.model, return_nodes=[split_layer])
        except ValueError as exc:
            raise ValueError(
                f"split layer {split_layer!r} not found in {model_name!r}") from exc
        self.split_layer = split_layer
        self.n_classes = n_classes
        self.transform = transforms.Compose([
            transforms.Resize((image_size, image_size)),
            transforms.ToTensor(),
            transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
        ])

    def extract(self, image: Image.Image) -> np.ndarray:
        """Feature map as (H, W, d) float32."""
        batch = self.transform(image.convert("RGB")).unsqueeze(0)
        with torch.no_grad():
            out = self.extractor(batch)[self.split_layer]
        if out.ndim != 4:
            raise ValueError(
                f"split layer {self.split_layer!r} yields ndim={out.ndim}, need 4")
        return out.squeeze(0).permute(1, 2, 0).contiguous().numpy().astype(np.float32)

    def pooled_head(self, channels: int, head_mode: str = "auto",
                    seed: int = 0) -> np.ndarray:
        """(C, d+1) head matrix, last column the bias.

        ``auto`` reuses the model's final linear layer when its input width
        matches the split-point channel count (exact for ResNet-style tails:
        global average pool followed by one affine layer); ``random`` draws a
        seeded head for split points with no compatible layer.
        """
        if head_mode == "auto":
            linear = None
            for module in self.model.modules():
                if isinstance(module, torch.nn.Linear) and module.in_features == channels:
                    linear = module
            if linear is None or linear.out_features != self.n_classes:
                raise ValueError(
                    f"no final linear layer consumes {channels} channels; "
                    "re-run with --head random")
            with torch.no_grad():
                weight = linear.weight.numpy().astype(np.float32)
                bias = (linear.bias.numpy().astype(np.float32)
                        if linear.bias is not None
                        else np.zeros(self.n_classes, dtype=np.float32))
        elif head_mode == "random":
            rng = np.random.default_rng(seed)
            weight = (0.05 * rng.standard_normal(
                (self.n_classes, channels))).astype(np.float32)
            bias = np.zeros(self.n_classes, dtype=np.float32)
        else:
            raise ValueError(f"head mode must be auto or random, got {head_mode!r}")
        return np.concatenate([weight, bias[:, None]], axis=1)
