"""Four-stage convolutional detector with optional style/domain machinery.

The extractor is a small from-scratch CNN (conv -> BN -> ReLU -> 2x2 avg
pool per stage) standing in for a pretrained backbone at desk scale.  A
dynamic feature block can follow any stage; at the injection stage the
features split into a batch-normalized content path and a pooled style
path, where bank styles diversify the content features during training.
The style path's statistics come from a frozen reference copy of the
extractor prefix (re-synced each bank refresh), so the classifier can use
style cues while its style gradients never reshape the live extractor.
The binary head reads content + style embedding; the domain head reads
gradient-reversed content.

Every parameter draws from its own named stream of the init seed, so
enabling a block never perturbs the initialization of any other.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor, grad_reverse, no_grad
from .dda import DDAModule
from .dfe import DFEBlock
from .domain_head import DomainDiscriminator
from .nn import BatchNorm2d, Conv2d, Initializer, Linear, Module, avg_pool2, global_avg_pool
from .style_bank import StyleBank

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    in_channels: int = 3
    widths: tuple = (16, 32, 64, 128)
    use_dda: bool = False
    use_dfe: bool = False
    dfe_stages: tuple = (True, True, True, True)
    use_dd: bool = False
    injection_stage: int = 3
    embed_dim: int = 64
    n_domains: int = 4
    n_experts: int = 4
    head_hidden: int = 64
    p_div: float = 0.5
    eps: float = 1e-5
    temperature: float = 30.0
    class_ids: tuple = (0, 1)

    def __post_init__(self):
        if len(self.widths) != 4:
            raise ValueError(f"expected 4 stage widths, got {self.widths}")
        if any(w % 2 for w in self.widths):
            raise ValueError(f"stage widths must be even (channel split), got {self.widths}")
        if not 1 <= self.injection_stage <= 4:
            raise ValueError(f"injection stage must be in 1..4, got {self.injection_stage}")
        if self.image_size % 16:
            raise ValueError(f"image size must be divisible by 16, got {self.image_size}")
        if self.use_dd and self.n_domains < 2:
            raise ValueError("domain discriminator needs at least 2 domains")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        for key in ("widths", "dfe_stages", "class_ids"):
            raw[key] = tuple(raw[key])
        return cls(**raw)


class Stage(Module):
    """conv3x3 -> BN -> ReLU -> 2x2 average pool."""

    def __init__(self, init: Initializer, name: str, cin: int, cout: int):
        super().__init__()
        self.conv = self.add_child("conv", Conv2d(init, f"{name}.conv", cin, cout))
        self.norm = self.add_child("norm", BatchNorm2d(cout))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return avg_pool2(ag.relu(self.norm(self.conv(x), training)))


class TrunkPrefix(Module):
    """Stages 1..last (with their dynamic blocks), rebuilt standalone.

    Used as the frozen reference extractor feeding the style head: it is
    initialized identically to the live prefix (same named init streams)
    and re-synced from the live weights once per bank refresh.  Its forward
    always runs in eval mode under no_grad, so its output is a constant of
    the training graph and gradients of the loss stay exact derivatives.
    """

    def __init__(self, config: ModelConfig, seed: int, last: int):
        super().__init__()
        init = Initializer(seed)
        cin = config.in_channels
        self.stages: list[Stage] = []
        self.dfe_blocks: dict[int, DFEBlock] = {}
        for s, width in enumerate(config.widths[:last], start=1):
            stage = Stage(init, f"stage{s}", cin, width)
            self.add_child(f"stage{s}", stage)
            self.stages.append(stage)
            if config.use_dfe and config.dfe_stages[s - 1]:
                block = DFEBlock(init, f"dfe{s}", width, config.n_experts,
                                 temperature=config.temperature)
                self.add_child(f"dfe{s}", block)
                self.dfe_blocks[s] = block
            cin = width

    def channel_means(self, images: np.ndarray) -> np.ndarray:
        """(B, C) per-channel spatial means of the prefix output, no grad."""
        with no_grad():
            x = Tensor(images)
            for s, stage in enumerate(self.stages, start=1):
                x = stage(x, training=False)
                if s in self.dfe_blocks:
                    x = self.dfe_blocks[s](x, training=False)
            return global_avg_pool(x).data


class ForgeryDetector(Module):
    """The full model; construction is deterministic in (config, seed)."""

    def __init__(self, config: ModelConfig, seed: int):
        super().__init__()
        self.config = config
        self.seed = int(seed)
        init = Initializer(seed)

        cin = config.in_channels
        self.stages: list[Stage] = []
        self.dfe_blocks: dict[int, DFEBlock] = {}
        for s, width in enumerate(config.widths, start=1):
            stage = Stage(init, f"stage{s}", cin, width)
            self.add_child(f"stage{s}", stage)
            self.stages.append(stage)
            if config.use_dfe and config.dfe_stages[s - 1]:
                block = DFEBlock(init, f"dfe{s}", width, config.n_experts,
                                 temperature=config.temperature)
                self.add_child(f"dfe{s}", block)
                self.dfe_blocks[s] = block
            cin = width

        inj_channels = config.widths[config.injection_stage - 1]
        self.dda: DDAModule | None = None
        self.style_ref: TrunkPrefix | None = None
        if config.use_dda:
            self.dda = DDAModule(init, "dda", inj_channels, config.embed_dim,
                                 config.class_ids, config.p_div, config.eps)
            self.add_child("dda", self.dda)
            # Deliberately not a child: its arrays must stay out of
            # named_params (never optimizer-updated) yet persist through
            # checkpoints, so each one is registered as state by reference.
            self.style_ref = TrunkPrefix(config, seed, config.injection_stage)
            for pname, tensor in self.style_ref.named_params().items():
                self.add_state(f"style_ref.{pname}", tensor.data)
            for sname, arr in self.style_ref.named_state().items():
                self.add_state(f"style_ref.{sname}", arr)

        final = config.widths[-1]
        self.head_content = self.add_child(
            "head_content", Linear(init, "head_content", final, config.head_hidden))
        if config.use_dda:
            self.head_style = self.add_child(
                "head_style",
                Linear(init, "head_style", config.embed_dim, config.head_hidden, bias=False))
        self.head_out = self.add_child("head_out", Linear(init, "head_out", config.head_hidden, 1))

        self.domain_head: DomainDiscriminator | None = None
        if config.use_dd:
            self.domain_head = DomainDiscriminator(
                init, "domain_head", final, config.n_domains, config.head_hidden)
            self.add_child("domain_head", self.domain_head)

    # ----------------------------------------------------------------- helpers
    def _run_stages(self, x: Tensor, first: int, last: int, training: bool) -> Tensor:
        for s in range(first, last + 1):
            x = self.stages[s - 1](x, training)
            if s in self.dfe_blocks:
                x = self.dfe_blocks[s](x, training)
        return x

    def set_dfe_temperature(self, value: float) -> None:
        for block in self.dfe_blocks.values():
            block.dynamic.temperature[0] = value

    def sync_style_reference(self) -> None:
        """Copy the live extractor prefix into the frozen style reference.

        In-place writes keep the registered state aliases valid, so synced
        values flow into checkpoints automatically.
        """
        if self.style_ref is None:
            return
        live_params = self.named_params()
        live_state = self.named_state()
        for pname, tensor in self.style_ref.named_params().items():
            tensor.data[...] = live_params[pname].data
        for sname, arr in self.style_ref.named_state().items():
            arr[...] = live_state[sname]

    def features_at_injection(self, images: np.ndarray) -> np.ndarray:
        """Eval-mode features entering the style/content split (no grad)."""
        with no_grad():
            x = self._run_stages(Tensor(images), 1, self.config.injection_stage, training=False)
        return x.data

    # ----------------------------------------------------------------- forward
    def forward(self, images, training: bool, y=None, bank: StyleBank | None = None,
                rng_mix: np.random.Generator | None = None,
                rng_dirichlet: np.random.Generator | None = None,
                grl_strength: float = 1.0):
        """Returns (binary_logits (B, 1), domain_logits (B, N) or None, style_embedding or None)."""
        x = images if isinstance(images, Tensor) else Tensor(images)
        if x.shape[1] != self.config.in_channels or x.shape[2] != self.config.image_size:
            raise ValueError(
                f"input shape {x.shape} does not match configured "
                f"{self.config.in_channels}x{self.config.image_size}"
            )
        raw_images = x.data
        inj = self.config.injection_stage
        x = self._run_stages(x, 1, inj, training)

        style_embedding = None
        if self.dda is not None:
            # The style head reads channel means from the frozen reference
            # prefix; diversified rows get their generated beta instead, so
            # the head sees the same mixed statistics the content path
            # carries without its gradients reshaping the live extractor.
            ref_means = self.style_ref.channel_means(raw_images)
            if training and bank is not None:
                if y is None or rng_mix is None or rng_dirichlet is None:
                    raise ValueError("training with a bank needs y labels and mix/dirichlet rngs")
                x, style_in = self.dda.mix_and_style(x, y, bank, rng_mix,
                                                     rng_dirichlet, ref_means)
            else:
                style_in = Tensor(ref_means)
            style_embedding = self.dda.embed_means(style_in)
            x = self.dda.content(x, training)

        x = self._run_stages(x, inj + 1, 4, training)
        h_c = global_avg_pool(x)

        hidden = self.head_content(h_c)
        if style_embedding is not None:
            hidden = ag.add(hidden, self.head_style(style_embedding))
        binary_logits = self.head_out(ag.relu(hidden))  # (B, 1)

        domain_logits = None
        if self.domain_head is not None:
            domain_logits = self.domain_head(grad_reverse(h_c, grl_strength))
        return binary_logits, domain_logits, style_embedding

    def scores(self, images, batch_size: int = 64) -> np.ndarray:
        """Eval-mode fake probabilities, batched, taped-free."""
        out = []
        with no_grad():
            for lo in range(0, len(images), batch_size):
                logits, _, _ = self.forward(images[lo : lo + batch_size], training=False)
                out.append(1.0 / (1.0 + np.exp(-logits.data.reshape(-1))))
        return np.concatenate(out) if out else np.zeros(0)


def load_backbone_weights(model: ForgeryDetector, path) -> int:
    """Load externally supplied extractor weights from an .npz of named arrays.

    Array names must match ``named_params`` keys (e.g. ``stage1.conv.weight``).
    Unknown names or shape mismatches are errors; returns how many parameters
    were overwritten.
    """
    params = model.named_params()
    loaded = 0
    with np.load(path, allow_pickle=False) as archive:
        for name in archive.files:
            if name not in params:
                raise KeyError(f"weight file names unknown parameter '{name}'")
            target = params[name].data
            src = archive[name]
            if src.shape != target.shape:
                raise ValueError(
                    f"shape mismatch for '{name}': file {src.shape} vs model {target.shape}"
                )
            target[...] = src
            loaded += 1
    model.sync_style_reference()
    return loaded


# ------------------------------------------------------------------ checkpoints
def save_checkpoint(path, model: ForgeryDetector, rng_state: dict | None = None,
                    extra: dict | None = None) -> None:
    """Versioned .npz of parameters, state arrays, config, and rng state."""
    payload = {
        "format_version": np.array([CHECKPOINT_FORMAT_VERSION]),
        "config_json": np.array(model.config.to_json()),
        "seed": np.array([model.seed]),
        "rng_json": np.array(json.dumps(rng_state, default=int) if rng_state else "null"),
        "extra_json": np.array(json.dumps(extra) if extra else "null"),
    }
    for name, tensor in model.named_params().items():
        payload[f"param/{name}"] = tensor.data
    for name, arr in model.named_state().items():
        payload[f"state/{name}"] = arr
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **payload)
    tmp.replace(target)


def load_checkpoint(path) -> tuple[ForgeryDetector, dict | None, dict | None]:
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive["format_version"][0])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        config = ModelConfig.from_json(str(archive["config_json"]))
        model = ForgeryDetector(config, int(archive["seed"][0]))
        arrays = {}
        for key in archive.files:
            if key.startswith("param/") or key.startswith("state/"):
                arrays[key.split("/", 1)[1]] = archive[key]
        model.load_state(arrays)
        rng_state = json.loads(str(archive["rng_json"]))
        extra = json.loads(str(archive["extra_json"]))
    return model, rng_state, extra
