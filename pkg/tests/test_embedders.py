import numpy as np
import pytest
import requests

from src.collectors import embedders
from src.collectors.embedders import (
    HttpEmbedder,
    TestEmbedder,
    fnv1a_64,
    make_provider,
    parse_embedder_spec,
    test_embed,
    validate_batch,
)
from src.config import EmbedderConfig
from src.errors import DycpError, ProviderContractError, ProviderTransportError


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


def _ok(texts, dim=4):
    return FakeResponse(200, {"dim": dim, "embeddings": [[float(len(t))] * dim for t in texts]})


@pytest.fixture(autouse=True)
def no_sleep(monkeypatch):
    monkeypatch.setattr(embedders.time, "sleep", lambda _: None)


def test_fnv1a_known_vector():
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"hello") == 0xA430D84680AABD0B


def test_test_embed_hello_lands_in_bucket_three_negative():
    vec = test_embed(["hello"], 8)[0]
    expected = np.zeros(8)
    expected[3] = -1.0
    assert np.array_equal(vec, expected)


def test_test_embed_is_unit_norm_and_deterministic():
    a = test_embed(["the cat sat on the mat"], 64)
    b = TestEmbedder(64).embed(["the cat sat on the mat"])
    assert np.array_equal(a, b)
    assert np.linalg.norm(a[0]) == pytest.approx(1.0)


def test_test_embed_empty_text_is_zero_vector():
    assert not test_embed([""], 16).any()


def test_validate_batch_rejects_ragged_and_non_finite():
    with pytest.raises(ProviderContractError):
        validate_batch([[1.0, 2.0], [1.0]], 2, None)
    with pytest.raises(ProviderContractError):
        validate_batch([[1.0, float("nan")]], 1, 2)
    with pytest.raises(ProviderContractError):
        validate_batch([[1.0, 2.0]], 2, 2)


def test_http_embedder_posts_contract_body(monkeypatch):
    calls = []

    def fake_post(self, url, json=None, timeout=None):
        calls.append((url, json))
        return _ok(json["texts"])

    monkeypatch.setattr(requests.Session, "post", fake_post)
    provider = HttpEmbedder("http://embed.local:9000", "contriever")
    out = provider.embed(["ab", "abc"])

    assert out.shape == (2, 4)
    assert provider.dim == 4
    url, body = calls[0]
    assert url == "http://embed.local:9000/embed"
    assert body == {"model": "contriever", "texts": ["ab", "abc"]}


def test_http_embedder_batches_requests(monkeypatch):
    sizes = []

    def fake_post(self, url, json=None, timeout=None):
        sizes.append(len(json["texts"]))
        return _ok(json["texts"])

    monkeypatch.setattr(requests.Session, "post", fake_post)
    provider = HttpEmbedder("http://embed.local", "m", EmbedderConfig(batch_size=64))
    out = provider.embed([f"t{i}" for i in range(130)])

    assert sizes == [64, 64, 2]
    assert out.shape == (130, 4)


def test_http_embedder_retries_server_errors(monkeypatch):
    responses = [FakeResponse(503), FakeResponse(500), None]

    def fake_post(self, url, json=None, timeout=None):
        resp = responses.pop(0)
        return resp if resp is not None else _ok(json["texts"])

    monkeypatch.setattr(requests.Session, "post", fake_post)
    out = HttpEmbedder("http://embed.local", "m").embed(["x"])
    assert out.shape == (1, 4)
    assert responses == []


def test_http_embedder_gives_up_after_retries(monkeypatch):
    attempts = []

    def fake_post(self, url, json=None, timeout=None):
        attempts.append(url)
        raise requests.ConnectionError("refused")

    monkeypatch.setattr(requests.Session, "post", fake_post)
    with pytest.raises(ProviderTransportError) as excinfo:
        HttpEmbedder("http://embed.local", "m", EmbedderConfig(retries=3)).embed(["x"])

    assert len(attempts) == 3
    assert excinfo.value.exit_code == 3
    assert excinfo.value.code == "provider_unreachable"


def test_http_embedder_client_error_is_not_retried(monkeypatch):
    attempts = []

    def fake_post(self, url, json=None, timeout=None):
        attempts.append(url)
        return FakeResponse(400, text="bad model")

    monkeypatch.setattr(requests.Session, "post", fake_post)
    with pytest.raises(ProviderContractError):
        HttpEmbedder("http://embed.local", "m").embed(["x"])
    assert len(attempts) == 1


def test_http_embedder_rejects_dimension_switch(monkeypatch):
    dims = [4, 8]

    def fake_post(self, url, json=None, timeout=None):
        return _ok(json["texts"], dim=dims.pop(0))

    monkeypatch.setattr(requests.Session, "post", fake_post)
    provider = HttpEmbedder("http://embed.local", "m")
    provider.embed(["a"])
    with pytest.raises(ProviderContractError):
        provider.embed(["b"])


def test_http_embedder_rejects_wrong_count(monkeypatch):
    def fake_post(self, url, json=None, timeout=None):
        return FakeResponse(200, {"dim": 2, "embeddings": [[1.0, 0.0]]})

    monkeypatch.setattr(requests.Session, "post", fake_post)
    with pytest.raises(ProviderContractError):
        HttpEmbedder("http://embed.local", "m").embed(["a", "b"])


def test_parse_embedder_spec():
    assert parse_embedder_spec("test:16") == ("test", "16", None)
    assert parse_embedder_spec("http:http://localhost:8080") == ("http", "http://localhost:8080", None)
    assert parse_embedder_spec("http:http://localhost:8080:contriever") == (
        "http",
        "http://localhost:8080",
        "contriever",
    )


def test_make_provider():
    provider = make_provider("test:32")
    assert isinstance(provider, TestEmbedder)
    assert provider.dim == 32

    remote = make_provider("http:http://host:1234:my-model")
    assert isinstance(remote, HttpEmbedder)
    assert remote.model == "my-model"
    assert remote.endpoint == "http://host:1234/embed"

    with pytest.raises(DycpError):
        make_provider("faiss:whatever")
    with pytest.raises(DycpError):
        make_provider("test:abc")
