"""Component CAM producers.

Every producer consumes the activations (and, where needed, gradients)
of one target convolutional layer for a given image and class, and
returns a saliency map at the input resolution, min-max normalized to
[0, 1].  A constant map normalizes to all-zero, which downstream
validity filtering treats as invalid.

All gradient- and perturbation-based producers are deterministic;
RandomCAM draws from an explicit seed.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .errors import CamFailure, UnknownCamMethod

CAM_METHODS = (
    "GradCAM",
    "HiResCAM",
    "GradCAMElementwise",
    "GradCAM++",
    "XGradCAM",
    "AblationCAM",
    "ScoreCAM",
    "EigenCAM",
    "EigenGradCAM",
    "LayerCAM",
    "FullGrad",
    "RandomCAM",
)

_EPS = 1e-8


class _LayerCapture:
    """Forward/backward capture of one layer's activations and gradients."""

    def __init__(self, model, target_layer, x, class_id):
        self.activation = None
        self.gradient = None

        def fwd_hook(_module, _inputs, output):
            self.activation = output
            output.register_hook(self._grad_hook)

        handle = target_layer.register_forward_hook(fwd_hook)
        try:
            x = x.clone().requires_grad_(True)
            self.input = x
            logits = model(x)
            if not (0 <= class_id < logits.shape[1]):
                raise CamFailure(
                    f"class {class_id} outside [0, {logits.shape[1]})"
                )
            self.logits = logits
            model.zero_grad(set_to_none=True)
            logits[0, class_id].backward(retain_graph=False)
        finally:
            handle.remove()
        if self.activation is None:
            raise CamFailure("target layer never fired during the forward pass")
        self.A = self.activation.detach()[0]  # (C, h, w)
        self.G = self.gradient.detach()[0] if self.gradient is not None else None
        self.input_grad = x.grad.detach()[0] if x.grad is not None else None

    def _grad_hook(self, grad):
        self.gradient = grad


def _weighted_cam(A: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    return torch.relu((weights.view(-1, 1, 1) * A).sum(dim=0))


def _grad_cam(cap):
    return _weighted_cam(cap.A, cap.G.mean(dim=(1, 2)))


def _hires_cam(cap):
    # no spatial averaging of gradients: keep per-pixel products
    return torch.relu((cap.G * cap.A).sum(dim=0))


def _elementwise_cam(cap):
    return torch.relu(cap.G * cap.A).sum(dim=0)


def _grad_cam_pp(cap):
    g = cap.G
    g2, g3 = g * g, g * g * g
    denom = 2.0 * g2 + (cap.A * g3).sum(dim=(1, 2), keepdim=True)
    alpha = g2 / torch.where(denom.abs() < _EPS, torch.full_like(denom, _EPS), denom)
    weights = (alpha * torch.relu(g)).sum(dim=(1, 2))
    return _weighted_cam(cap.A, weights)


def _xgrad_cam(cap):
    scale = cap.A.sum(dim=(1, 2)) + _EPS
    weights = (cap.G * cap.A).sum(dim=(1, 2)) / scale
    return _weighted_cam(cap.A, weights)


def _layer_cam(cap):
    return torch.relu((torch.relu(cap.G) * cap.A).sum(dim=0))


def _eigen_projection(stack: torch.Tensor) -> torch.Tensor:
    """First-principal-component projection of a (C, h, w) stack."""
    c, h, w = stack.shape
    flat = stack.reshape(c, h * w).T  # (pixels, channels)
    flat = flat - flat.mean(dim=0, keepdim=True)
    _, _, vh = torch.linalg.svd(flat, full_matrices=False)
    proj = flat @ vh[0]
    if proj.max().abs() < proj.min().abs():
        proj = -proj
    return proj.reshape(h, w)


def _eigen_cam(cap):
    return _eigen_projection(cap.A)


def _eigen_grad_cam(cap):
    return _eigen_projection(cap.G * cap.A)


def _score_cam(cap, model, class_id, chunk=16):
    """Channel importance from the model's own confidence on masked inputs."""
    A = cap.A
    x = cap.input.detach()
    h, w = x.shape[2], x.shape[3]
    masks = F.interpolate(A.unsqueeze(1), size=(h, w), mode="bilinear",
                          align_corners=False)[:, 0]  # (C, H, W)
    lo = masks.amin(dim=(1, 2), keepdim=True)
    hi = masks.amax(dim=(1, 2), keepdim=True)
    masks = (masks - lo) / torch.where(hi - lo < _EPS, torch.full_like(hi, 1.0), hi - lo)
    scores = []
    with torch.no_grad():
        for start in range(0, masks.shape[0], chunk):
            batch = masks[start : start + chunk].unsqueeze(1) * x  # (B, C_in, H, W)
            logits = model(batch)
            scores.append(torch.softmax(logits, dim=1)[:, class_id])
    weights = torch.softmax(torch.cat(scores), dim=0)
    return _weighted_cam(A, weights)


def _ablation_cam(cap, model, target_layer, class_id):
    """Channel importance from the logit drop when that channel is ablated."""
    x = cap.input.detach()
    base = cap.logits.detach()[0, class_id]
    n_channels = cap.A.shape[0]
    ablate_channel = {"idx": None}

    def hook(_module, _inputs, output):
        out = output.clone()
        out[:, ablate_channel["idx"]] = 0.0
        return out

    handle = target_layer.register_forward_hook(hook)
    drops = []
    try:
        with torch.no_grad():
            for idx in range(n_channels):
                ablate_channel["idx"] = idx
                logit = model(x)[0, class_id]
                drops.append((base - logit) / (base.abs() + _EPS))
    finally:
        handle.remove()
    return _weighted_cam(cap.A, torch.stack(drops))


def _full_grad(model, x, class_id):
    """Sum of the input-gradient map and every bias-gradient map."""
    captures = []

    def make_hook(module):
        def hook(_module, _inputs, output):
            holder = {"bias": module.bias.detach(), "grad": None}
            output.register_hook(lambda g: holder.__setitem__("grad", g))
            captures.append(holder)

        return hook

    handles = []
    for module in model.modules():
        if isinstance(module, (torch.nn.Conv2d, torch.nn.BatchNorm2d)):
            if getattr(module, "bias", None) is not None:
                handles.append(module.register_forward_hook(make_hook(module)))
    try:
        x = x.clone().requires_grad_(True)
        logits = model(x)
        if not (0 <= class_id < logits.shape[1]):
            raise CamFailure(f"class {class_id} outside [0, {logits.shape[1]})")
        model.zero_grad(set_to_none=True)
        logits[0, class_id].backward()
    finally:
        for h in handles:
            h.remove()

    h, w = x.shape[2], x.shape[3]

    def normalized(m):
        lo, hi = m.min(), m.max()
        return (m - lo) / (hi - lo) if hi - lo > _EPS else torch.zeros_like(m)

    total = normalized(torch.relu(x.detach()[0] * x.grad.detach()[0]).sum(dim=0))
    for holder in captures:
        if holder["grad"] is None:
            continue
        contrib = torch.relu(
            holder["grad"][0] * holder["bias"].view(-1, 1, 1)
        ).sum(dim=0, keepdim=True)
        up = F.interpolate(
            contrib.unsqueeze(0), size=(h, w), mode="bilinear", align_corners=False
        )[0, 0]
        total = total + normalized(up)
    return total


def _finalize(cam: torch.Tensor, size: tuple[int, int]) -> np.ndarray:
    """Upsample to input resolution and min-max normalize to [0, 1]."""
    if cam.shape != size:
        cam = F.interpolate(
            cam.reshape(1, 1, *cam.shape), size=size, mode="bilinear",
            align_corners=False,
        )[0, 0]
    cam = cam.double().cpu().numpy()
    if not np.all(np.isfinite(cam)):
        raise CamFailure("produced non-finite saliency values")
    lo, hi = cam.min(), cam.max()
    if hi - lo < _EPS:
        return np.zeros_like(cam)
    return (cam - lo) / (hi - lo)


def compute_cam(
    method: str,
    model: torch.nn.Module,
    target_layer: torch.nn.Module,
    x: torch.Tensor,
    class_id: int,
    seed: int = 0,
) -> np.ndarray:
    """One saliency map at input resolution, values in [0, 1].

    ``x`` is the preprocessed 1 x C x H x W input tensor.
    """
    if method not in CAM_METHODS:
        raise UnknownCamMethod(
            f"unknown CAM method {method!r}; known: {', '.join(CAM_METHODS)}"
        )
    size = (int(x.shape[2]), int(x.shape[3]))
    model.eval()

    if method == "RandomCAM":
        rng = np.random.default_rng(seed)
        return _finalize(torch.from_numpy(rng.uniform(-1.0, 1.0, size)), size)
    if method == "FullGrad":
        return _finalize(_full_grad(model, x, class_id), size)

    try:
        cap = _LayerCapture(model, target_layer, x, class_id)
    except CamFailure:
        raise
    except Exception as e:
        raise CamFailure(f"{method}: forward/backward pass failed: {e}") from e
    if cap.G is None and method not in ("EigenCAM", "ScoreCAM"):
        raise CamFailure(f"{method}: no gradient reached the target layer")

    try:
        if method == "GradCAM":
            cam = _grad_cam(cap)
        elif method == "HiResCAM":
            cam = _hires_cam(cap)
        elif method == "GradCAMElementwise":
            cam = _elementwise_cam(cap)
        elif method == "GradCAM++":
            cam = _grad_cam_pp(cap)
        elif method == "XGradCAM":
            cam = _xgrad_cam(cap)
        elif method == "LayerCAM":
            cam = _layer_cam(cap)
        elif method == "EigenCAM":
            cam = _eigen_cam(cap)
        elif method == "EigenGradCAM":
            cam = _eigen_grad_cam(cap)
        elif method == "ScoreCAM":
            cam = _score_cam(cap, model, class_id)
        elif method == "AblationCAM":
            cam = _ablation_cam(cap, model, target_layer, class_id)
    except CamFailure:
        raise
    except Exception as e:
        raise CamFailure(f"{method}: producer failed: {e}") from e
    return _finalize(cam, size)
