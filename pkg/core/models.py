from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

TaskName = Literal["seq_mnist", "perm_mnist", "synthetic"]
ModelKind = Literal["laes_linear", "laes_svm", "laes_ff", "rnn", "lmn", "lstm", "linear_rnn"]
InitScheme = Literal["ortho", "laes", "random"]
Objective = Literal["classify", "reconstruct"]
ActReg = Literal["l2", "norm_stabilizer"]

RECURRENT_KINDS = ("rnn", "lmn", "lstm", "linear_rnn")
LAES_HEAD_KINDS = ("laes_linear", "laes_svm", "laes_ff")

# Hyperparameter grids searched for every BP-trained model.
LR_GRID = (1e-3, 1e-4, 1e-5)
LAMBDA_ORTHO_GRID = (0.0, 1e-5, 1e-4, 1e-3, 1e-2)
ALPHA_ACT_GRID = (0.0, 1.0, 10.0, 100.0)
TRUNC_P_GRID = (0.0, 0.1, 0.25, 0.5, 1.0)
DEFAULT_PROBE_LAGS = (1, 5, 10, 25, 50, 100, 200, 300)


def _split_floats(value) -> Tuple[float, ...]:
    if isinstance(value, str):
        return tuple(float(v) for v in value.split(",") if v.strip())
    return tuple(float(v) for v in value)


class TrainConfig(BaseModel):
    """Optimizer and regularizer hyperparameters for one BP training run."""

    lr: float = Field(1e-3, ge=0, description="Adam learning rate")
    epochs: int = Field(100, ge=0)
    batch_size: int = Field(64, ge=1)
    lambda_ortho: float = Field(0.0, ge=0, description="Soft orthogonality weight on recurrent matrices")
    alpha_act: float = Field(0.0, ge=0, description="Activation regularization weight")
    act_reg: ActReg = "l2"
    trunc_p: float = Field(0.0, ge=0, le=1, description="Per-step probability of dropping the nonlinear recurrent gradient")
    seed: int = Field(0, ge=0)
    ridge: float = Field(1e-6, ge=0, description="Ridge used by closed-form readouts")
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    clip_norm: float = Field(10.0, gt=0, description="Global gradient-norm clip")
    shard_size: int = Field(64, ge=1, description="Sequences per forward/backward shard")
    max_workers: int = Field(1, ge=1)


class LaesFitConfig(BaseModel):
    hidden: int = Field(128, ge=1, description="Memory size p")
    prefix_stride: int = Field(1, ge=1)
    max_prefixes: Optional[int] = Field(50000, ge=1, description="Cap on prefix-matrix rows (None = all)")
    max_sequences: Optional[int] = Field(4096, ge=1, description="Cap on sequences used for the fit")
    center: bool = False
    solver: Literal["auto", "lapack", "gram", "randomized"] = "auto"
    seed: int = Field(0, ge=0)


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_acc: float
    seconds: float


class TrainHistory(BaseModel):
    records: List[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = 0.0

    def __len__(self) -> int:
        return len(self.records)


class GradientPoint(BaseModel):
    t: int
    grad_norm: float


class LagProbeResult(BaseModel):
    k: int
    mse: float
    model_tag: str


class LaesFitReport(BaseModel):
    rank_used: int
    prefix_rows: int
    prefix_cols: int
    solver: str
    total_energy: float
    retained_energy: float
    tail_energy: float
    relative_tail: float
    stm_error_mean: float = Field(..., description="Mean STM error over the sampled training sequences")
    stm_error_samples: int


class GridConfig(BaseModel):
    """Axes of the hyperparameter search; every combination is one cell."""

    lr: Tuple[float, ...] = LR_GRID
    lambda_ortho: Tuple[float, ...] = LAMBDA_ORTHO_GRID
    alpha_act: Tuple[float, ...] = ALPHA_ACT_GRID
    trunc_p: Tuple[float, ...] = TRUNC_P_GRID


class GridRow(BaseModel):
    cell_id: str
    lr: float
    lambda_ortho: float
    alpha_act: float
    trunc_p: float
    status: Literal["ok", "failed", "skipped"]
    best_val_acc: Optional[float] = None
    test_acc: Optional[float] = None


class RunSummary(BaseModel):
    model: str
    init: str
    objective: str
    seed: int
    best_epoch: int
    best_val_acc: float
    test_acc: Optional[float] = None
    test_mae: Optional[float] = None
    epochs_run: int
    scale: str


class ExperimentConfig(BaseModel):
    """
    Flat experiment configuration; one field per `key=value` line.
    Unknown keys are rejected.
    """

    model_config = ConfigDict(extra="forbid")

    task: TaskName = "seq_mnist"
    model: ModelKind = "lmn"
    init: InitScheme = "ortho"
    objective: Objective = "classify"

    data_dir: Optional[str] = None
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_count: Optional[int] = Field(None, ge=1, description="Train+val sequences taken from the train file")
    val_count: int = Field(5000, ge=0)
    test_count: Optional[int] = Field(None, ge=1)
    downsample: int = Field(1, ge=1)
    scale: Literal["unit", "centered"] = "unit"
    permutation_seed: int = Field(2020, ge=0)

    synthetic_n: int = Field(512, ge=1)
    synthetic_test_n: int = Field(256, ge=1)
    synthetic_t: int = Field(20, ge=1)
    synthetic_d: int = Field(1, ge=1)
    synthetic_margin: float = Field(0.0, ge=0)
    synthetic_scale: float = Field(1.0, gt=0)

    hidden: int = Field(128, ge=1)
    ff_hidden: int = Field(256, ge=0)
    svm_c: float = Field(1.0, gt=0)
    svm_epochs: int = Field(50, ge=1)

    laes_prefix_stride: int = Field(1, ge=1)
    laes_max_prefixes: Optional[int] = Field(50000, ge=1)
    laes_max_sequences: Optional[int] = Field(4096, ge=1)
    laes_center: Optional[bool] = Field(
        None, description="Center inputs before the LAES fit; unset (auto) centers for MNIST LAES classifiers only"
    )
    laes_solver: Literal["auto", "lapack", "gram", "randomized"] = "auto"

    lr: float = Field(1e-3, ge=0)
    epochs: int = Field(100, ge=0)
    batch_size: int = Field(64, ge=1)
    lambda_ortho: float = Field(0.0, ge=0)
    alpha_act: float = Field(0.0, ge=0)
    act_reg: ActReg = "l2"
    trunc_p: float = Field(0.0, ge=0, le=1)
    ridge: float = Field(1e-6, ge=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    clip_norm: float = Field(10.0, gt=0)
    shard_size: int = Field(64, ge=1)
    max_workers: int = Field(1, ge=1)

    seed: int = Field(0, ge=0)
    output_dir: str = "runs/default"

    probe_count: int = Field(64, ge=1)
    probe_lags: Tuple[int, ...] = DEFAULT_PROBE_LAGS
    probe_ridge: float = Field(1e-6, ge=0)
    csv_stride: int = Field(1, ge=1)

    grid_lr: Tuple[float, ...] = LR_GRID
    grid_lambda_ortho: Tuple[float, ...] = LAMBDA_ORTHO_GRID
    grid_alpha_act: Tuple[float, ...] = ALPHA_ACT_GRID
    grid_trunc_p: Tuple[float, ...] = TRUNC_P_GRID

    @field_validator("grid_lr", "grid_lambda_ortho", "grid_alpha_act", "grid_trunc_p", mode="before")
    @classmethod
    def _parse_float_list(cls, value):
        return _split_floats(value)

    @field_validator("probe_lags", mode="before")
    @classmethod
    def _parse_lags(cls, value):
        if isinstance(value, str):
            return tuple(int(v) for v in value.split(",") if v.strip())
        return value

    @field_validator("laes_center", mode="before")
    @classmethod
    def _auto_center(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "auto"):
            return None
        return value

    @field_validator("laes_max_prefixes", "laes_max_sequences", "train_count", "test_count", mode="before")
    @classmethod
    def _none_words(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none", "all"):
            return None
        return value

    def train_config(self) -> TrainConfig:
        fields = TrainConfig.model_fields.keys()
        return TrainConfig(**{name: getattr(self, name) for name in fields})

    def centers_laes(self) -> bool:
        """
        Whether the LAES fit subtracts the train mean. Recurrent networks carry no
        input bias, so an LAES that initializes one is never centered by default.
        """
        if self.laes_center is not None:
            return self.laes_center
        return self.task != "synthetic" and self.model in LAES_HEAD_KINDS

    def laes_config(self) -> LaesFitConfig:
        return LaesFitConfig(
            hidden=self.hidden,
            prefix_stride=self.laes_prefix_stride,
            max_prefixes=self.laes_max_prefixes,
            max_sequences=self.laes_max_sequences,
            center=self.centers_laes(),
            solver=self.laes_solver,
            seed=self.seed,
        )

    def grid_config(self) -> GridConfig:
        return GridConfig(
            lr=self.grid_lr,
            lambda_ortho=self.grid_lambda_ortho,
            alpha_act=self.grid_alpha_act,
            trunc_p=self.grid_trunc_p,
        )
