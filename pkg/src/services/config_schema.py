from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

ModelTag = Literal["vip", "random", "fitness", "relevance"]
BlockName = Literal["users", "items", "fitness"]


class SurfingParams(BaseModel):
    """Inverse-Gaussian "law of surfing" parameters."""

    model_config = ConfigDict(frozen=True)

    mu: float = Field(default=14.0, gt=0)  # mean items viewed per visit
    lam: float = Field(default=14.0, gt=0)  # shape

    @property
    def variance(self) -> float:
        return self.mu**3 / self.lam


class HyperParams(BaseModel):
    """Learner hyperparameters."""

    model_config = ConfigDict(frozen=True)

    K: int = Field(default=30, ge=1)
    lambda_u: float = Field(default=1e-3, gt=0)
    lambda_theta: float = Field(default=1e-3, gt=0)
    lambda_eta: float = Field(default=1e4, gt=0)
    conf_a: float = Field(default=1.0, gt=0)
    conf_b: float = Field(default=0.03, gt=0)
    conf_c: float = Field(default=0.01, gt=0)
    L_max: int = Field(default=100_000, ge=1)
    tail_tol: float = Field(default=1e-4, gt=0)
    tol: float = Field(default=1e-6, gt=0)
    max_iters: int = Field(default=200, ge=1)
    init_scale: float = Field(default=0.1, ge=0)
    sweep_order: List[BlockName] = Field(
        default=["users", "items", "fitness"], min_length=1
    )

    @model_validator(mode="after")
    def _check_confidence_order(self) -> "HyperParams":
        if not self.conf_a > self.conf_b > self.conf_c > 0:
            raise ValueError(
                "confidence levels must satisfy conf_a > conf_b > conf_c > 0, "
                f"got {self.conf_a}, {self.conf_b}, {self.conf_c}"
            )
        if sorted(self.sweep_order) != ["fitness", "items", "users"]:
            raise ValueError(
                "sweep_order must list users, items and fitness once each, "
                f"got {self.sweep_order}"
            )
        return self


class SyntheticParams(BaseModel):
    """Generator-side settings for simulated adoption logs."""

    model_config = ConfigDict(frozen=True)

    n_users: int = Field(default=200, ge=1)
    n_items: int = Field(default=500, ge=1)
    K: int = Field(default=5, ge=1)
    lambda_u: float = Field(default=0.5, gt=0)
    lambda_theta: float = Field(default=0.5, gt=0)
    lambda_eta: float = Field(default=0.25, gt=0)
    rho_min: float = Field(default=0.0, ge=0, le=1e4)
    rho_max: float = Field(default=100.0, ge=0, le=1e4)
    exposure_density: float = Field(default=0.1, gt=0, le=1)
    noise_precision: float = Field(default=4.0, gt=0)
    adoption_cut: float = 0.5
    planted_items: int = Field(default=0, ge=0)
    planted_fitness: float = 5.0
    topic_strength: float = Field(default=0.0, ge=0)
    adoption_band: Tuple[float, float] = (0.01, 0.9)

    @model_validator(mode="after")
    def _check_rho_range(self) -> "SyntheticParams":
        if self.rho_min > self.rho_max:
            raise ValueError(
                f"rho_min ({self.rho_min}) exceeds rho_max ({self.rho_max})"
            )
        if self.planted_items > self.n_items:
            raise ValueError("planted_items cannot exceed n_items")
        low, high = self.adoption_band
        if not 0 <= low <= high <= 1:
            raise ValueError(
                f"adoption_band must lie within [0, 1]: {self.adoption_band}"
            )
        return self


class RunConfig(BaseModel):
    """Flat run configuration, one key per line in the YAML file."""

    model_config = ConfigDict(extra="forbid")

    # paths
    events: Optional[str] = None
    meta: Optional[str] = None
    exposures: Optional[str] = None
    out_dir: str = "out"

    seed: int = Field(ge=0)
    threads: Optional[int] = Field(default=None, ge=1)

    # learner
    K: int = Field(default=30, ge=1)
    lambda_u: float = Field(default=1e-3, gt=0)
    lambda_theta: float = Field(default=1e-3, gt=0)
    lambda_eta: float = Field(default=1e4, gt=0)
    conf_a: float = Field(default=1.0, gt=0)
    conf_b: float = Field(default=0.03, gt=0)
    conf_c: float = Field(default=0.01, gt=0)
    L_max: int = Field(default=100_000, ge=1)
    tail_tol: float = Field(default=1e-4, gt=0)
    tol: float = Field(default=1e-6, gt=0)
    max_iters: int = Field(default=200, ge=1)
    init_scale: float = Field(default=0.1, ge=0)
    sweep_order: List[BlockName] = Field(
        default=["users", "items", "fitness"], min_length=1
    )

    # surfing law
    surf_mu: float = Field(default=14.0, gt=0)
    surf_lambda: float = Field(default=14.0, gt=0)

    # load ratio estimation
    post_rate_coeff: float = Field(default=1.4, gt=0)
    visit_rate_coeff: float = Field(default=7.6, gt=0)
    min_posts: int = Field(default=1, ge=1)
    negatives_per_user: int = Field(default=20, ge=0)

    # evaluation
    folds: int = Field(default=5, ge=2)
    recall_at: List[int] = [1, 3, 5, 10]
    models: List[ModelTag] = ["vip", "relevance", "fitness", "random"]
    activity_boundaries: List[int] = [1, 2, 4, 8, 16, 32, 64, 128]
    bucket_x: int = Field(default=3, ge=1)

    # simulation
    n_users: int = Field(default=200, ge=1)
    n_items: int = Field(default=500, ge=1)
    sim_K: int = Field(default=5, ge=1)
    sim_lambda_u: float = Field(default=0.5, gt=0)
    sim_lambda_theta: float = Field(default=0.5, gt=0)
    sim_lambda_eta: float = Field(default=0.25, gt=0)
    rho_min: float = Field(default=0.0, ge=0, le=1e4)
    rho_max: float = Field(default=100.0, ge=0, le=1e4)
    exposure_density: float = Field(default=0.1, gt=0, le=1)
    noise_precision: float = Field(default=4.0, gt=0)
    adoption_cut: float = 0.5
    planted_items: int = Field(default=0, ge=0)
    planted_fitness: float = 5.0
    sim_topic_strength: float = Field(default=0.0, ge=0)
    adoption_band: List[float] = Field(
        default=[0.01, 0.9], min_length=2, max_length=2
    )

    @model_validator(mode="after")
    def _check_lists(self) -> "RunConfig":
        if not self.recall_at or any(x < 1 for x in self.recall_at):
            raise ValueError("recall_at must list positive integers")
        if self.bucket_x not in self.recall_at:
            raise ValueError(
                f"bucket_x={self.bucket_x} must be one of recall_at {self.recall_at}"
            )
        if not self.models:
            raise ValueError("models must name at least one model")
        bounds = self.activity_boundaries
        if not bounds or any(b >= a for b, a in zip(bounds, bounds[1:])):
            raise ValueError(
                f"activity_boundaries must be strictly increasing: {bounds}"
            )
        # cross-field checks live on the derived models
        self.hyper_params()
        self.synthetic_params()
        return self

    def hyper_params(self) -> HyperParams:
        return HyperParams(
            K=self.K,
            lambda_u=self.lambda_u,
            lambda_theta=self.lambda_theta,
            lambda_eta=self.lambda_eta,
            conf_a=self.conf_a,
            conf_b=self.conf_b,
            conf_c=self.conf_c,
            L_max=self.L_max,
            tail_tol=self.tail_tol,
            tol=self.tol,
            max_iters=self.max_iters,
            init_scale=self.init_scale,
            sweep_order=self.sweep_order,
        )

    def surfing_params(self) -> SurfingParams:
        return SurfingParams(mu=self.surf_mu, lam=self.surf_lambda)

    def synthetic_params(self) -> SyntheticParams:
        return SyntheticParams(
            n_users=self.n_users,
            n_items=self.n_items,
            K=self.sim_K,
            lambda_u=self.sim_lambda_u,
            lambda_theta=self.sim_lambda_theta,
            lambda_eta=self.sim_lambda_eta,
            rho_min=self.rho_min,
            rho_max=self.rho_max,
            exposure_density=self.exposure_density,
            noise_precision=self.noise_precision,
            adoption_cut=self.adoption_cut,
            planted_items=self.planted_items,
            planted_fitness=self.planted_fitness,
            topic_strength=self.sim_topic_strength,
            adoption_band=(self.adoption_band[0], self.adoption_band[1]),
        )
