import json
import logging
import threading

import httpx
import pytest

from whysim.llm import (
    BudgetExhausted,
    ChatMessage,
    EchoProvider,
    Gateway,
    HttpProvider,
    ProviderError,
    ProviderConfig,
    ScriptedProvider,
    StorageUnavailable,
    TranscriptStore,
    make_provider,
)

CFG = ProviderConfig(provider="stub", script=[])


def msgs(*texts):
    out = [ChatMessage(role="system", text="sys")]
    out.extend(ChatMessage(role="user", text=t) for t in texts)
    return out


def test_scripted_provider_in_order():
    provider = ScriptedProvider(["remove(1)", "expl-1", "DONE", "final-text"])
    got = [provider.complete(msgs("x"), CFG).text for _ in range(4)]
    assert got == ["remove(1)", "expl-1", "DONE", "final-text"]


def test_scripted_provider_exhausted():
    provider = ScriptedProvider(["only"])
    provider.complete(msgs("x"), CFG)
    with pytest.raises(ProviderError) as err:
        provider.complete(msgs("x"), CFG)
    assert "script exhausted" in str(err.value)


def test_echo_provider_returns_last_user_text():
    provider = EchoProvider()
    out = provider.complete(msgs("first", "second"), CFG)
    assert out.text == "second"


def test_gateway_requires_system_first():
    gateway = Gateway(EchoProvider(), CFG)
    with pytest.raises(Exception):
        gateway.complete([ChatMessage(role="user", text="no system")])


def test_make_provider_unknown():
    with pytest.raises(Exception):
        make_provider(ProviderConfig(provider="nonsense"))


# -- http adapter ----------------------------------------------------------


def http_config(**kw):
    defaults = dict(provider="http", model="test-model",
                    endpoint="https://example.invalid/v1/chat/completions",
                    credential_env="TEST_LLM_KEY", retry_budget=2, timeout_s=5)
    defaults.update(kw)
    return ProviderConfig(**defaults)


def test_http_provider_success(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "sekret-token")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        seen["payload"] = json.loads(request.content)
        return httpx.Response(200, json={
            "choices": [{"message": {"content": "hello"}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 2},
        })

    client = httpx.Client(transport=httpx.MockTransport(handler))
    provider = HttpProvider(client=client)
    out = provider.complete(msgs("hi"), http_config())
    assert out.text == "hello"
    assert out.input_tokens == 10
    assert seen["auth"] == "Bearer sekret-token"
    assert seen["payload"]["max_tokens"] == 512


def test_http_provider_retries_then_succeeds(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k")
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] < 3:
            return httpx.Response(503, text="busy")
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    provider = HttpProvider(client=httpx.Client(transport=httpx.MockTransport(handler)))
    out = provider.complete(msgs("hi"), http_config())
    assert out.text == "ok"
    assert calls["n"] == 3


def test_http_provider_budget_exhausted(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k")

    def handler(request):
        return httpx.Response(503, text="busy")

    provider = HttpProvider(client=httpx.Client(transport=httpx.MockTransport(handler)))
    with pytest.raises(BudgetExhausted):
        provider.complete(msgs("hi"), http_config(retry_budget=1))


def test_http_provider_hard_error_no_retry(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k")
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(400, text="bad request")

    provider = HttpProvider(client=httpx.Client(transport=httpx.MockTransport(handler)))
    with pytest.raises(ProviderError):
        provider.complete(msgs("hi"), http_config())
    assert calls["n"] == 1


def test_no_credentials_in_logs(monkeypatch, caplog):
    monkeypatch.setenv("TEST_LLM_KEY", "super-secret-value")

    def handler(request):
        return httpx.Response(200, json={"choices": [{"message": {"content": "y"}}]})

    provider = HttpProvider(client=httpx.Client(transport=httpx.MockTransport(handler)))
    gateway = Gateway(provider, http_config(), session_id="s")
    with caplog.at_level(logging.DEBUG):
        gateway.complete(msgs("hi"))
    assert "super-secret-value" not in caplog.text


def test_record_replay_equivalence():
    """A stub replaying a recorded transcript drives the orchestrator to the
    byte-identical session."""
    from whysim.orchestrator import ObservationMemory, Orchestrator, SessionConfig, UserQuestion
    from whysim.scenarios import build_simulator, load

    script = ["remove(1)", "expl", "DONE", "final"]

    def run(provider):
        spec = load(1)
        sim = build_simulator(spec)
        memory = ObservationMemory(ego_id=0, trajectory=sim.baseline())
        gateway = Gateway(provider, CFG, session_id="rr")
        orch = Orchestrator(simulator=sim, observation_memory=memory, gateway=gateway)
        prompt = spec.user_prompts[0]
        return orch.explain(UserQuestion(prompt.text, prompt.time, prompt.ego_id),
                            SessionConfig(horizon=spec.horizon))

    first = run(ScriptedProvider(script))
    # "Record" the assistant turns, then replay them through a fresh stub.
    recorded = [e.text for e in first.memory.entries if e.role == "assistant"]
    second = run(ScriptedProvider(recorded))
    assert first.memory.to_dict() == second.memory.to_dict()


# -- transcript store --------------------------------------------------------


def test_store_round_trip(tmp_path):
    store = TranscriptStore(root=tmp_path)
    entries = [{"role": "user", "text": "hello"}, {"role": "assistant", "text": "hi"}]
    store.record("abc", entries)
    assert store.load("abc") == entries


def test_store_lists_sessions(tmp_path):
    store = TranscriptStore(root=tmp_path)
    store.record("one", [{"x": 1}])
    store.record("two", [{"x": 2}])
    assert store.list_sessions() == ["one", "two"]


def test_store_missing_session(tmp_path):
    store = TranscriptStore(root=tmp_path)
    with pytest.raises(StorageUnavailable):
        store.load("ghost")


def test_store_concurrent_appends_preserve_order(tmp_path):
    store = TranscriptStore(root=tmp_path)
    n = 40

    def writer(session_id):
        for k in range(n):
            store.record(session_id, [{"seq": k, "session": session_id}])

    threads = [threading.Thread(target=writer, args=(sid,)) for sid in ("a", "b")]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for sid in ("a", "b"):
        entries = store.load(sid)
        assert [e["seq"] for e in entries] == list(range(n))
        assert all(e["session"] == sid for e in entries)
