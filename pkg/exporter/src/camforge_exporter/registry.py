"""Model registry: name -> constructor, target layer, input geometry.

The target layer for CAM extraction defaults to the last convolutional
block of each architecture, which is standard practice.  Additional
models (e.g. small test CNNs) can be registered at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch.nn as nn

from .errors import UnknownModel


@dataclass(frozen=True)
class ModelEntry:
    name: str
    factory: Callable[[bool], nn.Module]  # pretrained -> module in eval mode
    target_layer: Callable[[nn.Module], nn.Module]
    input_size: int = 224
    class_count: int = 1000


_REGISTRY: dict[str, ModelEntry] = {}


def register(entry: ModelEntry) -> None:
    _REGISTRY[entry.name.lower()] = entry


def get_model_entry(name: str) -> ModelEntry:
    try:
        return _REGISTRY[name.lower()]
    except KeyError:
        raise UnknownModel(
            f"unknown model {name!r}; known: {', '.join(sorted(_REGISTRY))}"
        ) from None


def known_models() -> list[str]:
    return sorted(_REGISTRY)


def _torchvision_factory(ctor_name: str):
    def factory(pretrained: bool) -> nn.Module:
        import torchvision.models as tvm

        ctor = getattr(tvm, ctor_name)
        model = ctor(weights="DEFAULT" if pretrained else None)
        model.eval()
        return model

    return factory


for _name in ("resnet18", "resnet34", "resnet50", "resnet152"):
    register(
        ModelEntry(
            name=_name,
            factory=_torchvision_factory(_name),
            target_layer=lambda m: m.layer4[-1],
        )
    )

for _name in ("densenet121", "densenet161"):
    register(
        ModelEntry(
            name=_name,
            factory=_torchvision_factory(_name),
            target_layer=lambda m: m.features[-1],  # final batch norm after denseblock4
        )
    )
