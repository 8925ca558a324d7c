"""Core data types for hierarchical diagnosis-code assignment."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Optional, Tuple

from .validators import (
    ConfigurationError,
    validate_kernel_widths,
    validate_positive,
    validate_probability,
)


class CodeKind(str, Enum):
    """ICD-9 code families; each family places the decimal point differently."""

    DIAGNOSIS = "diagnosis"
    PROCEDURE = "procedure"
    E_CODE = "e-code"
    V_CODE = "v-code"


@dataclass(frozen=True, order=True)
class CodeId:
    """A canonical dotted ICD-9 code.

    Attributes:
        code: Dotted form, e.g. "405.01", "E847.0", "38.93", or a block range "401-405"
        kind: Code family
    """

    code: str
    kind: CodeKind = CodeKind.DIAGNOSIS

    def __post_init__(self) -> None:
        """Validate code data."""
        if not self.code:
            raise ValueError("Code cannot be empty")

    def __str__(self) -> str:
        return self.code


@dataclass(frozen=True)
class RawDocument:
    """One line of corpus.jsonl before tokenization.

    Attributes:
        id: Record identifier
        text: Free-text clinical note
        codes: Raw code strings as exported (dotted or undotted)
    """

    id: str
    text: str
    codes: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Record:
    """One encoded admission.

    Attributes:
        id: Record identifier
        tokens: Vocabulary indices, head-truncated, never padded
        gold: Finest-level gold codes
        flagged: True when no token was found in the vocabulary
    """

    id: str
    tokens: Tuple[int, ...]
    gold: FrozenSet[CodeId]
    flagged: bool = False

    def __post_init__(self) -> None:
        """Validate record data."""
        if len(self.tokens) == 0:
            raise ValueError(f"Record {self.id} has no tokens")
        if min(self.tokens) < 0:
            raise ValueError(f"Record {self.id} has negative token indices")


@dataclass(frozen=True)
class EncoderConfig:
    """Document encoding layer settings.

    Attributes:
        embedding_dim: Word vector size d_e
        kernel_widths: Filter widths s_1..s_m (all odd)
        conv_dim: Feature size d_c of the multi-filter convolutions; defaults to d_e
        residual_dim: Residual block output size d_r
        dropout: Inverted-dropout rate applied after embedding and after encoding
    """

    embedding_dim: int = 100
    kernel_widths: Tuple[int, ...] = (3, 5, 9, 15, 19, 25)
    conv_dim: Optional[int] = None
    residual_dim: int = 50
    dropout: float = 0.4

    def __post_init__(self) -> None:
        """Validate encoder settings."""
        validate_positive("embedding_dim", self.embedding_dim)
        validate_kernel_widths(self.kernel_widths)
        if self.conv_dim is not None:
            validate_positive("conv_dim", self.conv_dim)
        validate_positive("residual_dim", self.residual_dim)
        validate_probability("dropout", self.dropout)

    @property
    def filter_dim(self) -> int:
        """Feature size of each multi-filter convolution output."""
        return self.conv_dim if self.conv_dim is not None else self.embedding_dim

    @property
    def output_dim(self) -> int:
        """Width d_res of the concatenated residual outputs."""
        return len(self.kernel_widths) * self.residual_dim


@dataclass(frozen=True)
class GcnConfig:
    """Ontology representation layer settings."""

    num_layers: int = 1
    hidden_dim: int = 300

    def __post_init__(self) -> None:
        """Validate GCN settings."""
        if not 1 <= self.num_layers <= 3:
            raise ConfigurationError(f"GCN layer count must be in 1..3, got {self.num_layers}")
        validate_positive("hidden_dim", self.hidden_dim)


@dataclass(frozen=True)
class HpmConfig:
    """Hierarchical prediction layer settings.

    Attributes:
        attention_dim: d_a of the code-specific attention
        dependency_dim: d_c^t of every dependency vector, including the zero c^0
    """

    attention_dim: int = 300
    dependency_dim: int = 500

    def __post_init__(self) -> None:
        """Validate HPM settings."""
        validate_positive("attention_dim", self.attention_dim)
        validate_positive("dependency_dim", self.dependency_dim)


COGRAPH_SYMMETRIZATIONS = ("avg", "max", "none")
LOSS_REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class ModelConfig:
    """Complete model configuration including ablation switches.

    Attributes:
        levels: Number of hierarchy levels T (the last T levels are modelled)
        no_orl: Bypass the GCN; attention queries use the descriptor means V^t
        no_hpl: Model the finest level only (T := 1)
        no_dpu: Force every dependency vector to zero
        cograph_sym: GCN adjacency: avg or max of the row-normalised weights, or raw counts (none)
        loss_reduction: How per-record losses combine within a batch
    """

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    gcn: GcnConfig = field(default_factory=GcnConfig)
    hpm: HpmConfig = field(default_factory=HpmConfig)
    levels: int = 3
    no_orl: bool = False
    no_hpl: bool = False
    no_dpu: bool = False
    cograph_sym: str = "avg"
    loss_reduction: str = "mean"

    def __post_init__(self) -> None:
        """Validate model settings."""
        if not 1 <= self.levels <= 4:
            raise ConfigurationError(f"levels must be in 1..4, got {self.levels}")
        if self.cograph_sym not in COGRAPH_SYMMETRIZATIONS:
            raise ConfigurationError(
                f"cograph_sym must be one of {COGRAPH_SYMMETRIZATIONS}, got {self.cograph_sym!r}"
            )
        if self.loss_reduction not in LOSS_REDUCTIONS:
            raise ConfigurationError(
                f"loss_reduction must be one of {LOSS_REDUCTIONS}, got {self.loss_reduction!r}"
            )

    @property
    def modelled_levels(self) -> int:
        """Number of levels the prediction layer actually chains."""
        return 1 if self.no_hpl else self.levels

    @property
    def use_gcn(self) -> bool:
        """Whether ontology vectors are propagated over the co-graph."""
        return not self.no_orl

    @property
    def use_ontology_attention(self) -> bool:
        """Whether the ontology-guided attention path exists.

        Dropping both ORL and HPL keeps the code-specific attention only.
        """
        return not (self.no_orl and self.no_hpl)

    @property
    def use_dpu(self) -> bool:
        """Whether dependency vectors are computed between levels."""
        return not self.no_dpu and self.modelled_levels > 1

    def to_dict(self) -> Dict[str, object]:
        """Flatten into JSON-friendly primitives."""
        return {
            "embedding_dim": self.encoder.embedding_dim,
            "kernel_widths": list(self.encoder.kernel_widths),
            "conv_dim": self.encoder.conv_dim,
            "residual_dim": self.encoder.residual_dim,
            "dropout": self.encoder.dropout,
            "gcn_layers": self.gcn.num_layers,
            "gcn_dim": self.gcn.hidden_dim,
            "attention_dim": self.hpm.attention_dim,
            "dependency_dim": self.hpm.dependency_dim,
            "levels": self.levels,
            "no_orl": self.no_orl,
            "no_hpl": self.no_hpl,
            "no_dpu": self.no_dpu,
            "cograph_sym": self.cograph_sym,
            "loss_reduction": self.loss_reduction,
        }

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "ModelConfig":
        """Inverse of ``to_dict``."""
        conv_dim = values.get("conv_dim")
        return cls(
            encoder=EncoderConfig(
                embedding_dim=int(values["embedding_dim"]),  # type: ignore[arg-type]
                kernel_widths=tuple(
                    int(w) for w in values["kernel_widths"]  # type: ignore[union-attr]
                ),
                conv_dim=None if conv_dim is None else int(conv_dim),  # type: ignore[arg-type]
                residual_dim=int(values["residual_dim"]),  # type: ignore[arg-type]
                dropout=float(values["dropout"]),  # type: ignore[arg-type]
            ),
            gcn=GcnConfig(
                num_layers=int(values["gcn_layers"]),  # type: ignore[arg-type]
                hidden_dim=int(values["gcn_dim"]),  # type: ignore[arg-type]
            ),
            hpm=HpmConfig(
                attention_dim=int(values["attention_dim"]),  # type: ignore[arg-type]
                dependency_dim=int(values["dependency_dim"]),  # type: ignore[arg-type]
            ),
            levels=int(values["levels"]),  # type: ignore[arg-type]
            no_orl=bool(values["no_orl"]),
            no_hpl=bool(values["no_hpl"]),
            no_dpu=bool(values["no_dpu"]),
            cograph_sym=str(values["cograph_sym"]),
            loss_reduction=str(values["loss_reduction"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation and early-stopping settings.

    Attributes:
        learning_rate: AdamW step size
        weight_decay: Decoupled weight decay
        batch_size: Records per optimiser step
        patience: Epochs without validation Micro-F1 improvement before stopping
        max_epochs: Hard epoch limit
        seed: Seed for initialisation, shuffling and dropout
        threshold: Decision threshold used for F1 during validation
        betas: Adam moment decay rates
        eps: Adam denominator offset
    """

    learning_rate: float = 1e-4
    weight_decay: float = 5e-5
    batch_size: int = 16
    patience: int = 10
    max_epochs: int = 100
    seed: int = 0
    threshold: float = 0.5
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self) -> None:
        """Validate training settings."""
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate cannot be negative, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay cannot be negative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be at least 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be at least 1, got {self.max_epochs}")
        validate_probability("threshold", self.threshold, inclusive_low=False)
        for beta in self.betas:
            validate_probability("beta", beta)
        validate_positive("eps", self.eps)

    def to_dict(self) -> Dict[str, object]:
        """Flatten into JSON-friendly primitives."""
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "patience": self.patience,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
            "threshold": self.threshold,
            "betas": list(self.betas),
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "TrainConfig":
        """Inverse of ``to_dict``."""
        betas = tuple(float(b) for b in values["betas"])  # type: ignore[union-attr]
        return cls(
            learning_rate=float(values["learning_rate"]),  # type: ignore[arg-type]
            weight_decay=float(values["weight_decay"]),  # type: ignore[arg-type]
            batch_size=int(values["batch_size"]),  # type: ignore[arg-type]
            patience=int(values["patience"]),  # type: ignore[arg-type]
            max_epochs=int(values["max_epochs"]),  # type: ignore[arg-type]
            seed=int(values["seed"]),  # type: ignore[arg-type]
            threshold=float(values["threshold"]),  # type: ignore[arg-type]
            betas=(betas[0], betas[1]),
            eps=float(values["eps"]),  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class LevelMetrics:
    """Evaluation results for one hierarchy level.

    Undefined AUC values (no code with both classes) are stored as None and
    rendered as "-".
    """

    level: int
    num_codes: int
    macro_auc: Optional[float]
    micro_auc: Optional[float]
    macro_f1: float
    micro_f1: float
    precision_at: Dict[int, float]
    macro_f1_excluded: int = 0
    macro_auc_excluded: int = 0

    def __post_init__(self) -> None:
        """Validate that every defined metric lies in [0, 1]."""
        values = [self.macro_auc, self.micro_auc, self.macro_f1, self.micro_f1]
        values.extend(self.precision_at.values())
        for value in values:
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"Metric out of range at level {self.level}: {value}")
        if self.macro_f1_excluded < 0 or self.macro_auc_excluded < 0:
            raise ValueError("Exclusion counts cannot be negative")


@dataclass(frozen=True)
class EvalReport:
    """Per-level evaluation; the last entry is the diagnosis (finest) level."""

    levels: Tuple[LevelMetrics, ...]

    def __post_init__(self) -> None:
        """Validate report consistency."""
        if len(self.levels) == 0:
            raise ValueError("Evaluation report must contain at least one level")

    @property
    def final(self) -> LevelMetrics:
        """Metrics of the finest level."""
        return self.levels[-1]


@dataclass(frozen=True)
class LevelStatistics:
    """Size and label density of one hierarchy level."""

    level: int
    num_codes: int
    avg_codes_per_record: float
