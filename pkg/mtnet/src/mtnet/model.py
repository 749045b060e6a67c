"""Two-branch encoder, two-head decoder network.

The encoder runs an RGB branch and a depth branch side by side; after
every stage the depth features are added into the RGB branch, and that
fused map is what the skip connections carry. Two independent decoders
share the fused bottleneck: one ends in a per-class logit map, the
other in a single-channel residual that callers add to the raw input
depth. The residual head starts at exactly zero, so an untrained model
is a depth passthrough.

GroupNorm instead of BatchNorm throughout: no running statistics means
a fixed seed gives a bit-reproducible checkpoint and the loss is a
deterministic function of the parameters (which the finite-difference
tests rely on).
"""

from __future__ import annotations

import torch
from torch import nn

from .config import NetConfig


def _block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        nn.GroupNorm(1, c_out),
        nn.ReLU(inplace=True),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        nn.GroupNorm(1, c_out),
        nn.ReLU(inplace=True),
    )


class _Decoder(nn.Module):
    def __init__(self, widths, skip_connections: bool):
        super().__init__()
        self.skip_connections = skip_connections
        ups, blocks = [], []
        cur = widths[-1]
        for w in reversed(widths):
            ups.append(nn.ConvTranspose2d(cur, w, 2, stride=2))
            blocks.append(_block(2 * w if skip_connections else w, w))
            cur = w
        self.ups = nn.ModuleList(ups)
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x, skips):
        for up, block, skip in zip(self.ups, self.blocks, reversed(skips)):
            x = up(x)
            if self.skip_connections:
                x = torch.cat([x, skip], dim=1)
            x = block(x)
        return x


class MultiTaskNet(nn.Module):
    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        w = config.widths
        rgb_in = [3] + list(w[:-1])
        dep_in = [2] + list(w[:-1])   # depth value + validity mask
        self.rgb_stages = nn.ModuleList(_block(i, o) for i, o in zip(rgb_in, w))
        self.depth_stages = nn.ModuleList(_block(i, o) for i, o in zip(dep_in, w))
        self.pool = nn.MaxPool2d(2)
        self.bottom = _block(w[-1], w[-1])
        self.seg_decoder = _Decoder(w, config.skip_connections)
        self.depth_decoder = _Decoder(w, config.skip_connections)
        self.seg_head = nn.Conv2d(w[0], config.num_classes, 1)
        self.depth_head = nn.Conv2d(w[0], 1, 1)
        nn.init.zeros_(self.depth_head.weight)
        nn.init.zeros_(self.depth_head.bias)

    def forward(self, rgb, raw_depth):
        """(B,3,H,W) in [0,1] and (B,1,H,W) normalized depth, 0 = invalid;
        returns per-class logits (B,C,H,W) and a residual (B,1,H,W).
        Unbatched 3D inputs get a batch axis added and removed."""
        unbatched = rgb.dim() == 3
        if unbatched:
            rgb, raw_depth = rgb[None], raw_depth[None]
        if rgb.shape[-2:] != (self.config.height, self.config.width):
            raise ValueError(f"input is {tuple(rgb.shape[-2:])}, network wants "
                             f"({self.config.height}, {self.config.width})")
        if rgb.shape[-2:] != raw_depth.shape[-2:]:
            raise ValueError("RGB and depth input sizes differ")

        x = rgb
        y = torch.cat([raw_depth, (raw_depth > 0).to(raw_depth.dtype)], dim=1)
        skips = []
        for rgb_stage, depth_stage in zip(self.rgb_stages, self.depth_stages):
            x = rgb_stage(x)
            y = depth_stage(y)
            if self.config.fusion == "add":
                x = x + y
            skips.append(x)
            x = self.pool(x)
            y = self.pool(y)

        x = self.bottom(x)
        seg = self.seg_head(self.seg_decoder(x, skips))
        res = self.depth_head(self.depth_decoder(x, skips))
        if unbatched:
            seg, res = seg[0], res[0]
        return seg, res


def build(config: NetConfig) -> MultiTaskNet:
    return MultiTaskNet(config)
