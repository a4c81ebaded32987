from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Optional, Tuple

import numpy as np

from .errors import InvalidInput


EmbeddingVector = np.ndarray

DEFAULT_JUDGE_PROMPT = (
    "You compare two workflow tasks. Reply with a single digit: 1 if the generated "
    "task is semantically aligned with the reference task, 0 otherwise.\n"
    "Generated task: {generated}\n"
    "Reference task: {reference}\n"
    "Answer:"
)


@dataclass(frozen=True)
class ProviderConfig:
    endpoint_url: str = ""
    api_key_env: str = "WKFORGE_API_KEY"
    timeout: float = 30.0
    max_in_flight: int = 4
    offline_mode: bool = True
    seed: int = 0
    dimension: int = 256
    judge_prompt: str = DEFAULT_JUDGE_PROMPT

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise InvalidInput("max_in_flight must be at least 1")
        if self.dimension < 1:
            raise InvalidInput("embedding dimension must be at least 1")
        if self.timeout <= 0:
            raise InvalidInput("timeout must be positive")
        if not self.offline_mode and not self.endpoint_url:
            raise InvalidInput("online mode requires an endpoint_url")


@dataclass(frozen=True)
class TaskNode:
    id: str
    title: str
    description: str
    industry: str = ""
    implementation_summaries: Tuple[str, ...] = ()
    embedding: Optional[EmbeddingVector] = field(default=None, compare=False, repr=False)

    def semantic_text(self) -> str:
        return f"{self.title}\n{self.description}\n{self.industry}"


@dataclass(frozen=True)
class EdgeStat:
    src: str
    dst: str
    pair_count: int
    weight: float


@dataclass(frozen=True)
class WorkflowImplementationRecord:
    workflow_id: str
    task_ids: Tuple[str, ...]
    cost_compute: float = 0.0
    cost_time: float = 0.0
    cost_model: float = 0.0
    success: bool = True

    def __post_init__(self) -> None:
        if not self.task_ids:
            raise InvalidInput(f"record {self.workflow_id!r} has no tasks")
        if min(self.cost_compute, self.cost_time, self.cost_model) < 0:
            raise InvalidInput(f"record {self.workflow_id!r} has a negative cost")


@dataclass(frozen=True)
class CostStats:
    c_compute: float
    c_time: float
    c_model: float
    success_rate: float
    appearances: int


@dataclass(frozen=True)
class ModalityItem:
    modality: str
    payload: bytes
    canonical_text: Optional[str] = None
    source: Optional[str] = None


@dataclass(frozen=True)
class IntentionBundle:
    client_input: Tuple[ModalityItem, ...]
    client_output: Tuple[ModalityItem, ...] = ()
    process_context: Tuple[ModalityItem, ...] = ()

    def items(self) -> Tuple[ModalityItem, ...]:
        return self.client_input + self.client_output + self.process_context


@dataclass(frozen=True, eq=False)
class EncodedIntention:
    gamma: EmbeddingVector
    per_modality: Dict[str, EmbeddingVector]


@dataclass(frozen=True)
class DecodedIntention:
    input_description: str
    output_description: str
    process_description: str


@dataclass(frozen=True)
class RoutingConfig:
    similarity_threshold: float = 0.3
    knn_k: int = 5
    mutual_knn: bool = True

    def __post_init__(self) -> None:
        if self.knn_k < 1:
            raise InvalidInput("knn_k must be at least 1")


@dataclass(frozen=True)
class SubWKG:
    node_ids: FrozenSet[str]
    edge_list: Tuple[Tuple[str, str], ...]
    terminals: FrozenSet[str]
    swkg_id: str = "swkg-1"


@dataclass(frozen=True)
class GeneratedTask:
    local_id: str
    title: str
    description: str
    instructions: Tuple[str, ...] = ()
    wkg_node_id: Optional[str] = None

    def text(self) -> str:
        return f"{self.title} {self.description}".strip()


@dataclass(frozen=True)
class TaskSequence:
    tasks: Tuple[GeneratedTask, ...]
    source_swkg: str

    def __post_init__(self) -> None:
        if not self.tasks:
            raise InvalidInput("a task sequence needs at least one task")


@dataclass(frozen=True)
class WorkflowDag:
    nodes: Tuple[GeneratedTask, ...]
    edges: Tuple[Tuple[str, str], ...]


@dataclass(frozen=True)
class EnhanceConfig:
    alpha_start: float = 1.0
    delta_alpha: float = 0.05
    alpha_floor: float = 0.0

    def __post_init__(self) -> None:
        if self.delta_alpha <= 0:
            raise InvalidInput("delta_alpha must be positive")
        if not 0 <= self.alpha_floor < self.alpha_start <= 1:
            raise InvalidInput("expected 0 <= alpha_floor < alpha_start <= 1")


@dataclass(frozen=True)
class CostWeights:
    w_compute: float = 1.0
    w_time: float = 1.0
    w_model: float = 1.0

    def __post_init__(self) -> None:
        if min(self.w_compute, self.w_time, self.w_model) < 0:
            raise InvalidInput("cost weights must be non-negative")

    def scaled(self, factor: float) -> "CostWeights":
        return CostWeights(self.w_compute * factor, self.w_time * factor, self.w_model * factor)


@dataclass(frozen=True)
class DefaultCosts:
    c_compute: float = 1.0
    c_time: float = 1.0
    c_model: float = 1.0

    def __post_init__(self) -> None:
        if min(self.c_compute, self.c_time, self.c_model) < 0:
            raise InvalidInput("default task costs must be non-negative")


@dataclass(frozen=True)
class TaskCost:
    c_compute: float
    c_time: float
    c_model: float
    combined: float
    success_rate: Optional[float] = None


@dataclass(frozen=True)
class PathResult:
    node_ids: Tuple[str, ...]
    total_cost: float
    per_task: Tuple[TaskCost, ...]


@dataclass(frozen=True)
class ReferenceTask:
    id: str
    title: str
    description: str

    def text(self) -> str:
        return f"{self.title} {self.description}".strip()


@dataclass(frozen=True)
class ReferenceWorkflow:
    tasks: Tuple[ReferenceTask, ...]

    def __post_init__(self) -> None:
        if not self.tasks:
            raise InvalidInput("reference workflow is empty")
        ids = [task.id for task in self.tasks]
        if len(set(ids)) != len(ids):
            raise InvalidInput("reference task ids must be unique")


@dataclass(frozen=True)
class MatchPair:
    generated: int
    reference: int
    score: float


@dataclass(frozen=True)
class Matching:
    pairs: Tuple[MatchPair, ...]
    unmatched_generated: Tuple[int, ...]

    @property
    def generated_count(self) -> int:
        return len(self.pairs) + len(self.unmatched_generated)

    def in_generated_order(self) -> Tuple[MatchPair, ...]:
        return tuple(sorted(self.pairs, key=lambda pair: pair.generated))


@dataclass(frozen=True)
class MetricReport:
    coverage: float
    kendall_raw: float
    kendall: float
    dtw: float
    bleu: float
    cosine: float
    pentagon_area: float
    trials: int = 1

    def headline(self) -> Tuple[float, float, float, float, float]:
        """Pentagon axis values in ranking-table column order."""
        return (self.coverage, self.kendall, self.dtw, self.cosine, self.bleu)


@dataclass(frozen=True)
class RunConfig:
    wkg_path: Path
    intention_dir: Path
    output_dir: Path
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    defaults: DefaultCosts = field(default_factory=DefaultCosts)
    trials: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise InvalidInput("trials must be at least 1")
