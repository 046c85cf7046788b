from dataclasses import dataclass, fields, asdict

FULL_HIDDEN = (2048, 1024, 512)
DESK_HIDDEN = (256, 128, 64)


@dataclass
class TrainerConfig:
    """Learner settings. Defaults are the full-scale training table except
    ``batch_size`` and the layer widths, which use the desk-scale values."""
    gamma: float = 0.95
    lam: float = 0.95
    policy_lr: float = 5.0e-5
    value_lr: float = 3.0e-4
    clip: float = 0.2
    batch_size: int = 8192
    epochs: int = 300
    passes: int = 5
    minibatches: int = 8
    grad_clip: float = 1.0
    sigma: float = 0.1
    policy_hidden: tuple = DESK_HIDDEN
    value_hidden: tuple = DESK_HIDDEN
    seed: int = 0
    checkpoint_every: int = 50

    def errors(self):
        """Every validation failure, as human-readable strings."""
        out = []
        if not 0.0 < self.gamma <= 1.0:
            out.append(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            out.append(f"lam must lie in [0, 1], got {self.lam}")
        for name in ("policy_lr", "value_lr", "clip", "sigma"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be positive, got {getattr(self, name)}")
        if self.grad_clip < 0:
            out.append(f"grad_clip must be >= 0 (0 disables), got {self.grad_clip}")
        for name in ("batch_size", "passes", "minibatches", "checkpoint_every"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                out.append(f"{name} must be a positive integer, got {v!r}")
        if not (isinstance(self.epochs, int) and self.epochs >= 0):
            out.append(f"epochs must be a non-negative integer, got {self.epochs!r}")
        if isinstance(self.batch_size, int) and isinstance(self.minibatches, int) \
                and 1 <= self.batch_size < self.minibatches:
            out.append("batch_size must be at least minibatches")
        for name in ("policy_hidden", "value_hidden"):
            v = getattr(self, name)
            if not v or not all(isinstance(w, int) and w >= 1 for w in v):
                out.append(f"{name} must be a non-empty list of positive integers, got {v!r}")
        return out

    def to_dict(self):
        d = asdict(self)
        d["policy_hidden"] = list(self.policy_hidden)
        d["value_hidden"] = list(self.value_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown trainer keys: {unknown}")
        d = dict(d)
        for name in ("policy_hidden", "value_hidden"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)
