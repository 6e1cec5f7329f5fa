import numpy as np
import pytest
import torch
import torch.nn as nn
from PIL import Image

from camforge_exporter.registry import ModelEntry, register


class ToyCNN(nn.Module):
    """Small CNN exercising the graph shapes the writer must handle:
    residual add, channel concat, pooling, global pooling, linear head."""

    def __init__(self, classes=8):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(8)
        self.relu = nn.ReLU()
        self.pool = nn.MaxPool2d(2)
        self.conv2 = nn.Conv2d(8, 8, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(8)
        self.shortcut = nn.Conv2d(8, 8, 1)
        self.conv4 = nn.Conv2d(16, 12, 3, stride=2, padding=1)
        self.gap = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(12, classes)

    def forward(self, x):
        x1 = self.pool(self.relu(self.bn1(self.conv1(x))))
        y = self.relu(self.bn2(self.conv2(x1)) + self.shortcut(x1))
        z = torch.cat([y, x1], dim=1)
        z = self.relu(self.conv4(z))
        z = self.gap(z)
        z = torch.flatten(z, 1)
        return self.fc(z)


@pytest.fixture(scope="session")
def toy_model():
    torch.manual_seed(0)
    model = ToyCNN()
    model.eval()
    return model


@pytest.fixture(scope="session")
def toy_entry(toy_model):
    entry = ModelEntry(
        name="toycnn",
        factory=lambda pretrained: toy_model,
        target_layer=lambda m: m.conv4,
        input_size=64,
        class_count=8,
    )
    register(entry)
    return entry


@pytest.fixture(scope="session")
def source_image(tmp_path_factory):
    """A 96x80 RGB PNG with a bright square on a dark background."""
    rng = np.random.default_rng(5)
    arr = (rng.random((80, 96, 3)) * 40).astype(np.uint8)
    arr[20:60, 30:70] = (220, 180, 60)
    path = tmp_path_factory.mktemp("images") / "source.png"
    Image.fromarray(arr).save(path)
    return path


@pytest.fixture
def toy_input(toy_entry, source_image):
    from camforge_exporter.preprocess import preprocess_image

    image = preprocess_image(source_image, resize=96, crop=64)
    return torch.from_numpy(image[None]).float()
