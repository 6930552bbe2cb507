import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from litrag.config import default_config
from litrag.testing import StubChatService, StubEmbeddingService

STUB_DIM = 32


@pytest.fixture()
def embed_service():
    with StubEmbeddingService(dim=STUB_DIM) as svc:
        yield svc


@pytest.fixture()
def chat_service():
    with StubChatService() as svc:
        yield svc


@pytest.fixture()
def engine_config(embed_service, chat_service, tmp_path):
    from dataclasses import replace

    cfg = default_config(embed_service.url, chat_service.url)
    return replace(
        cfg,
        embedding=replace(cfg.embedding, expected_dim=STUB_DIM, batch_size=64),
        store_path=str(tmp_path / "kb"),
    )
