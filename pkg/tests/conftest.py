from __future__ import annotations

import sys
from pathlib import Path
from typing import Iterable, Sequence, Tuple

ROOT_DIR = Path(__file__).resolve().parents[1]
SRC_DIR = ROOT_DIR / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

import numpy as np
import pytest

from wkforge import config
from wkforge.models import ProviderConfig, TaskNode
from wkforge.providers import ProviderSuite, build_providers, l2_normalize
from wkforge.wkg import WorkKnowledgeGraph, load_graph

DATA_DIR = Path(__file__).resolve().parent / "data"


@pytest.fixture(autouse=True)
def _isolated_settings(tmp_path_factory, monkeypatch):
    # Keep the user's real settings.ini and offline flag out of every test.
    settings = tmp_path_factory.mktemp("config") / "settings.ini"
    monkeypatch.setattr(config, "_config_file", lambda: settings)
    monkeypatch.delenv(config.OFFLINE_ENV, raising=False)
    return settings


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def offline_config() -> ProviderConfig:
    return ProviderConfig(offline_mode=True, seed=0)


@pytest.fixture
def offline_suite(offline_config) -> ProviderSuite:
    return build_providers(offline_config)


@pytest.fixture
def medical_wkg() -> WorkKnowledgeGraph:
    return load_graph(DATA_DIR / "medical_coding_wkg.json")


def make_task(node_id: str, embedding: Sequence[float] = None) -> TaskNode:
    vector = None if embedding is None else l2_normalize(np.asarray(embedding, dtype=float))
    return TaskNode(
        id=node_id,
        title=f"Task {node_id}",
        description=f"Description of {node_id}",
        industry="Testing",
        embedding=vector,
    )


def make_graph(
    node_ids: Iterable[str],
    pair_counts: Iterable[Tuple[str, str, int]] = (),
    embeddings=None,
    lam: float = 0.5,
) -> WorkKnowledgeGraph:
    """Graph with explicit pair counts; ``embeddings`` maps id -> raw vector."""
    graph = WorkKnowledgeGraph(lam)
    for node_id in node_ids:
        graph.upsert_task(make_task(node_id, (embeddings or {}).get(node_id)))
    for src, dst, count in pair_counts:
        graph._set_pair_count(src, dst, count)
    return graph
