"""Training configuration: a key=value text file, same shape as the toolkit's
pipeline config but with trainer-specific keys."""

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class TrainConfig:
    # optimization
    epochs: int = 30
    lr: float = 1e-3
    lr_step: int = 30
    lr_gamma: float = 0.1
    weight_decay: float = 5e-4
    batch_size: int = 8
    seed: int = 0
    # pseudo-label exchange
    ema_period: int = 3
    ema_decay: float = 0.5
    # loss schedule constants
    eta: float = 1.0
    epsilon: float = 0.1
    # which terms participate (the ablation axis)
    use_clu: bool = True
    use_cot: bool = True
    use_color: bool = True
    # dataset handling
    split_ratio: float = 0.25
    val_count: int = 4
    test_count: int = 8
    augment: bool = False
    # network size
    seg_levels: int = 4
    seg_base: int = 16
    color_levels: int = 3
    color_base: int = 8
    # inference patching
    patch: int = 48
    overlap: int = 16
    # plumbing
    toolkit: str = "pointprop"
    workers: int = 4
    parity_epochs: str = ""
    parity_images: int = 2

    def __post_init__(self):
        positive = (
            "epochs", "lr", "lr_step", "lr_gamma", "weight_decay",
            "batch_size", "ema_period", "seg_levels", "seg_base",
            "color_levels", "color_base", "patch", "workers",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        if not 0.0 < self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in (0, 1]")
        if self.eta < 0 or self.epsilon < 0:
            raise ValueError("schedule weights must be non-negative")
        if not 0.0 <= self.split_ratio <= 1.0:
            raise ValueError("split_ratio must lie in [0, 1]")
        if self.val_count < 1:
            raise ValueError("val_count must be at least 1")
        if self.test_count < 0 or self.overlap < 0:
            raise ValueError("test_count and overlap must be non-negative")
        if self.overlap >= self.patch:
            raise ValueError("overlap must be smaller than patch")
        if self.parity_images < 1:
            raise ValueError("parity_images must be positive")
        for tok in self.parity_epochs.split(","):
            if tok.strip() and int(tok) < 0:
                raise ValueError("parity epochs must be non-negative")

    def parity_epoch_list(self):
        return sorted(
            int(tok) for tok in self.parity_epochs.split(",") if tok.strip()
        )


_FIELDS = {f.name: f.type for f in fields(TrainConfig)}


def _convert(key, raw):
    kind = _FIELDS[key]
    if kind in (bool, "bool"):
        if raw in ("0", "false", "False"):
            return False
        if raw in ("1", "true", "True"):
            return True
        raise ValueError("key %r expects 0 or 1, got %r" % (key, raw))
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw


def parse_config(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("line %d: expected key = value" % lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ValueError("line %d: unknown key %r" % (lineno, key))
        if key in values:
            raise ValueError("line %d: duplicate key %r" % (lineno, key))
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ValueError("line %d: %s" % (lineno, exc))
    return TrainConfig(**values)


def load_config(path):
    with open(path, "r", encoding="ascii") as fh:
        return parse_config(fh.read())
