import json
import threading
from decimal import Decimal
from fractions import Fraction

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ciao.errors import (
    AuthFailed,
    OutputEmpty,
    ProviderError,
    ProviderExhausted,
    TransientProviderError,
    UnknownModelPrice,
)
from ciao.llm import (
    API_KEY_ENV,
    BASE_URL_ENV,
    CompletionRequest,
    FixedClock,
    Gateway,
    HttpProvider,
    MockProvider,
    ScriptStep,
    accumulate_cost,
    backoff_delay,
    call_cost,
    complete,
    load_price_table,
)

# per-call (input, output) usage for one 8-section run
USAGE_8 = [(12000, 800), (15000, 1200), (9000, 600), (20000, 2000), (11000, 900), (8000, 500), (14000, 1100), (10000, 700)]
TEST_PRICES = {"test-model": (Decimal("1.25"), Decimal("10"))}


def req(label="s", model="m"):
    return CompletionRequest(model, "system", "user", label=label)


def run(provider, **kw):
    delays = []
    result = complete(req(), provider, sleep=delays.append, rng=lambda: 1.0, clock=FixedClock(0), **kw)
    return result, delays


def test_request_validation():
    with pytest.raises(ValueError):
        CompletionRequest("", "s", "u")
    with pytest.raises(ValueError):
        CompletionRequest("m", "s", "u", max_output_tokens=0)


def test_success_after_two_transient_failures():
    p = MockProvider({"s": [ScriptStep(error="rate-limit"), ScriptStep(error="timeout"), ScriptStep("ok")]})
    result, delays = run(p)
    assert result.text == "ok" and result.attempts == 3
    assert len(p.calls) == 3
    # full jitter with rng=1.0 hits the caps: 2 s, then 8 s
    assert delays == [2.0, 8.0]


def test_exhausted_after_three():
    p = MockProvider({"s": [ScriptStep(error="server-error")] * 5})
    with pytest.raises(ProviderExhausted) as exc:
        run(p)
    assert exc.value.attempts == 3
    assert isinstance(exc.value.last_error, TransientProviderError)
    assert len(p.calls) == 3


def test_auth_and_bad_request_not_retried():
    for kind, err in [("auth", AuthFailed), ("bad-request", ProviderError)]:
        p = MockProvider({"s": [ScriptStep(error=kind), ScriptStep("ok")]})
        with pytest.raises(err):
            run(p)
        assert len(p.calls) == 1


def test_blank_output_not_retried():
    p = MockProvider({"s": [ScriptStep("  \n"), ScriptStep("ok")]})
    with pytest.raises(OutputEmpty):
        run(p)
    assert len(p.calls) == 1


@given(st.integers(1, 6), st.floats(0, 1))
def test_backoff_within_cap(failures, u):
    d = backoff_delay(failures, lambda: u)
    assert 0 <= d <= 2.0 * 4 ** (failures - 1)


def test_mock_usage_and_determinism():
    p = MockProvider(default=lambda r: "abcdefgh")
    a = p.send(req())
    b = MockProvider(default=lambda r: "abcdefgh").send(req())
    assert a == b
    assert a.input_tokens == 3  # "systemuser" is 10 chars
    assert a.output_tokens == 2


def test_mock_from_json():
    p = MockProvider.from_json(json.dumps([
        {"section": "x", "error": "timeout"},
        {"section": "x", "text": "second"},
    ]))
    assert p.script["x"] == [ScriptStep(error="timeout"), ScriptStep("second")]
    for bad in ['[{"text": "t"}]', '[{"section": "x"}]', '[{"section": "x", "error": "meteor"}]']:
        with pytest.raises(ValueError):
            MockProvider.from_json(bad)


def test_gateway_limits_in_flight():
    p = MockProvider(default=lambda r: "ok")
    gw = Gateway(p, "mock", max_in_flight=2, clock=FixedClock(0))
    threads = [threading.Thread(target=gw.complete, args=(gw.request("s", "u", f"l{i}"),)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(p.calls) == 8
    assert p.peak_in_flight <= 2


def test_fixed_clock():
    c = FixedClock(0)
    assert c.now().isoformat() == "1970-01-01T00:00:00+00:00"
    assert c.monotonic_ms() == 0


def _http(handler):
    return HttpProvider("k-123", "https://llm.example/v1", client=httpx.Client(transport=httpx.MockTransport(handler)))


def test_http_provider_success():
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={
            "choices": [{"message": {"content": "## 1. System Overview\n"}}],
            "usage": {"prompt_tokens": 120, "completion_tokens": 30},
        })

    raw = _http(handler).send(req(model="gpt-5"))
    assert raw.text.startswith("## 1.")
    assert (raw.input_tokens, raw.output_tokens) == (120, 30)
    assert seen["auth"] == "Bearer k-123"
    assert seen["url"] == "https://llm.example/v1/chat/completions"
    assert [m["role"] for m in seen["body"]["messages"]] == ["system", "user"]
    assert seen["body"]["max_completion_tokens"] == 16000


@pytest.mark.parametrize(
    "status, err",
    [(401, AuthFailed), (403, AuthFailed), (429, TransientProviderError), (503, TransientProviderError), (400, ProviderError)],
)
def test_http_status_mapping(status, err):
    with pytest.raises(err):
        _http(lambda r: httpx.Response(status, text="nope")).send(req())


def test_http_timeout_is_transient():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(TransientProviderError) as exc:
        _http(handler).send(req())
    assert exc.value.kind == "timeout"


def test_http_malformed_body():
    with pytest.raises(ProviderError):
        _http(lambda r: httpx.Response(200, json={"nothing": 1})).send(req())


def test_http_retry_end_to_end():
    statuses = iter([500, 429, 200])

    def handler(request):
        code = next(statuses)
        if code != 200:
            return httpx.Response(code)
        return httpx.Response(200, json={"choices": [{"message": {"content": "done"}}], "usage": {}})

    result, delays = run(_http(handler))
    assert result.text == "done" and result.attempts == 3 and len(delays) == 2


def test_from_env(monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(AuthFailed):
        HttpProvider.from_env()
    monkeypatch.setenv(API_KEY_ENV, "secret")
    monkeypatch.setenv(BASE_URL_ENV, "http://localhost:9999/v1/")
    p = HttpProvider.from_env()
    assert p.url == "http://localhost:9999/v1/chat/completions"


def test_cost_eight_calls():
    report = accumulate_cost([(f"s{i}", a, b) for i, (a, b) in enumerate(USAGE_8, 1)], "test-model", TEST_PRICES)
    oracle = sum(Fraction(a) * Fraction(5, 4) / 10**6 + Fraction(b) * 10 / 10**6 for a, b in USAGE_8)
    assert abs(Fraction(report.total_usd) - oracle) <= Fraction(1, 10**9)
    assert report.total_usd == Decimal("0.20175")
    assert report.total_input_tokens == 99000
    assert report.total_output_tokens == 7800
    assert report.total_usd == sum(c.usd for c in report.per_call)


def test_unknown_model_price():
    with pytest.raises(UnknownModelPrice):
        accumulate_cost([], "nope", TEST_PRICES)


@given(st.integers(0, 10**7), st.integers(0, 10**7), st.integers(0, 10**7), st.integers(0, 10**7))
def test_cost_is_linear(i1, o1, i2, o2):
    prices = TEST_PRICES["test-model"]
    assert call_cost(i1 + i2, o1 + o2, prices) == call_cost(i1, o1, prices) + call_cost(i2, o2, prices)
    assert call_cost(i1, o1, prices) >= 0


def test_bundled_price_table(tmp_path):
    table = load_price_table()
    assert table["gpt-5"] == (Decimal("1.25"), Decimal("10.00"))
    assert "_comment" not in table
    custom = tmp_path / "p.json"
    custom.write_text('{"x": {"input": 0.1, "output": 0.2}}')
    assert load_price_table(custom) == {"x": (Decimal("0.1"), Decimal("0.2"))}
    custom.write_text('{"x": {"input": -1, "output": 0.2}}')
    with pytest.raises(ValueError):
        load_price_table(custom)
