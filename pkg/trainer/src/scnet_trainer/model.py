"""SC-Net: a residual U-Net segmentation branch chained into a smaller
colorization branch.

The segmentation branch maps the 1-channel H-component to a 1-channel
probability map; the colorization branch maps that probability map back to a
3-channel image.  Both end in a sigmoid, so outputs live in [0, 1] and match
the input's spatial dims.  Depth/width default to desk scale (4 levels, base
16); the full-size variant is just larger constructor arguments.
"""

import torch
from torch import nn


class ResBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        groups = min(8, channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = nn.GroupNorm(groups, channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.GroupNorm(groups, channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        y = self.act(self.norm1(self.conv1(x)))
        y = self.norm2(self.conv2(y))
        return self.act(x + y)


class ResUNet(nn.Module):
    """Encoder-decoder with residual blocks and skip connections.

    ``levels`` counts resolutions; spatial dims must be divisible by
    2**(levels-1).
    """

    def __init__(self, in_channels, out_channels, levels=4, base=16):
        super().__init__()
        if levels < 1:
            raise ValueError("levels must be positive")
        self.levels = levels
        widths = [base * (1 << i) for i in range(levels)]

        self.stem = nn.Conv2d(in_channels, widths[0], 3, padding=1)
        self.enc = nn.ModuleList(ResBlock(w) for w in widths)
        self.down = nn.ModuleList(
            nn.Conv2d(widths[i], widths[i + 1], 2, stride=2)
            for i in range(levels - 1)
        )
        self.up = nn.ModuleList(
            nn.ConvTranspose2d(widths[i + 1], widths[i], 2, stride=2)
            for i in range(levels - 1)
        )
        self.fuse = nn.ModuleList(
            nn.Conv2d(2 * widths[i], widths[i], 3, padding=1)
            for i in range(levels - 1)
        )
        self.dec = nn.ModuleList(ResBlock(widths[i]) for i in range(levels - 1))
        self.head = nn.Conv2d(widths[0], out_channels, 1)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        step = 1 << (self.levels - 1)
        if x.shape[-1] % step or x.shape[-2] % step:
            raise ValueError(
                "input dims must be divisible by %d for %d levels"
                % (step, self.levels)
            )
        skips = []
        y = self.stem(x)
        for i in range(self.levels - 1):
            y = self.enc[i](y)
            skips.append(y)
            y = self.down[i](y)
        y = self.enc[-1](y)
        for i in reversed(range(self.levels - 1)):
            y = self.up[i](y)
            y = self.act(self.fuse[i](torch.cat([y, skips[i]], dim=1)))
            y = self.dec[i](y)
        return torch.sigmoid(self.head(y))


class ScNet(nn.Module):
    def __init__(self, seg_levels=4, seg_base=16, color_levels=3, color_base=8):
        super().__init__()
        self.seg = ResUNet(1, 1, seg_levels, seg_base)
        self.color = ResUNet(1, 3, color_levels, color_base)

    def forward(self, h, with_color=False):
        """h: (B, 1, H, W) -> probability (B, 1, H, W)[, rgb (B, 3, H, W)]."""
        prob = self.seg(h)
        if not with_color:
            return prob
        return prob, self.color(prob)
