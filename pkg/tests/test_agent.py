import json

import httpx
import pytest

from graphtools import case_query, case_session, make_graph
from pathseeker.agent import (
    FINISHED_STATE,
    LOCAL_DISABLED,
    NO_RELEVANT,
    RETRY_PROMPT,
    STATE_PREFIX,
    TASK_INTRO,
    UNKNOWN_LINE,
    Action,
    ActionKind,
    ActionParseError,
    AgentConfig,
    TaskInstruction,
    Toggles,
    Step,
    Trajectory,
    answer_region,
    build_preamble,
    final_reason,
    parse_action,
    run_agent,
    step,
    write_trajectory,
)
from pathseeker.clients import (
    CachedClient,
    ChatTransportError,
    HttpChatClient,
    ScriptedClient,
    ScriptExhausted,
    complete_with_retries,
)
from pathseeker.encoding import NO_NEW_PATHWAYS
from pathseeker.pcst import SubgraphRetriever


def no_sleep(_):
    pass


# -- parsing ---------------------------------------------------------------------


def test_parse_global():
    a = parse_action("Thought: go.\nAction:\nsearch_biopathway_subgraph_global(['ethanol, liver'])\nEnd Action")
    assert a.kind is ActionKind.GLOBAL
    assert a.keywords == ("ethanol, liver",)
    assert a.query.tokens == ("ethanol", "liver")


def test_parse_local():
    a = parse_action("Action: search_biopathway_triple_N_hop_subgraph(18, ['adiponectin', 'steatosis']) End Action")
    assert a.kind is ActionKind.LOCAL and a.line_id == 18
    assert a.keywords == ("adiponectin", "steatosis")


def test_parse_finish():
    assert parse_action("Answer:\nFinished.").kind is ActionKind.FINISH


def test_parse_case_turns():
    kinds = [parse_action(t).kind for t in case_session()["turns"]]
    assert kinds == [ActionKind.GLOBAL, ActionKind.LOCAL, ActionKind.LOCAL, ActionKind.FINISH]
    assert parse_action(case_session()["turns"][1]).line_id == 18


@pytest.mark.parametrize(
    "text, keywords",
    [
        ('search_biopathway_subgraph_global(["a", "b"])', ("a", "b")),
        ("search_biopathway_subgraph_global([a, b])", ("a", "b")),
        ("search_biopathway_subgraph_global('a, b')", ("a, b",)),
        ("search_biopathway_subgraph_global(['it's broken'])", ("it's broken",)),
    ],
)
def test_parse_lenient(text, keywords):
    assert parse_action(text).keywords == keywords


def test_parse_local_unquoted():
    a = parse_action("search_biopathway_triple_N_hop_subgraph(3, [liver, fat])")
    assert a.line_id == 3 and a.keywords == ("liver", "fat")


@pytest.mark.parametrize(
    "text",
    ["I think the answer is yes.", "search_biopathway_triple_N_hop_subgraph(['no id'])", "search_biopathway_subgraph_global([])"],
)
def test_parse_errors(text):
    with pytest.raises(ActionParseError):
        parse_action(text)


def test_parse_extra_tools():
    a = parse_action("search_biopathway_triple(['ethanol'], ['activation'])")
    assert a.kind is ActionKind.TRIPLE
    assert a.endpoint_keywords == ("ethanol",) and a.keywords == ("activation",)
    assert parse_action("search_biopathway_node(['mir-217'])").kind is ActionKind.NODE
    assert parse_action("search_biopathway_edge(['activation'])").kind is ActionKind.EDGE


def test_answer_region():
    assert answer_region("Thought: hmm\nAnswer: Yes, it does.\nFinished.") == "Yes, it does.\nFinished."
    assert answer_region("no marker") == "no marker"


# -- environment step --------------------------------------------------------------


@pytest.fixture(scope="module")
def env():
    from graphtools import case_graph

    return SubgraphRetriever().fit(case_graph())


def test_step_sentinels(env):
    traj = Trajectory()
    cfg = AgentConfig()
    obs = step(env, traj, Action(ActionKind.LOCAL, ("x",), 0), cfg)
    assert obs.text == STATE_PREFIX + UNKNOWN_LINE
    obs = step(env, traj, Action(ActionKind.GLOBAL, ("zzzz qqqq",)), cfg)
    assert obs.text == STATE_PREFIX + NO_RELEVANT
    assert traj.api_counts == {"global": 1, "local": 1, "other": 0}
    assert traj.ledger.total_num == 0
    obs = step(env, traj, Action(ActionKind.FINISH), cfg)
    assert obs.text == STATE_PREFIX + FINISHED_STATE and traj.finished


def test_step_repeat_global(env):
    traj = Trajectory()
    cfg = AgentConfig()
    a = Action(ActionKind.GLOBAL, (case_query(),))
    first = step(env, traj, a, cfg)
    assert first.text.startswith(STATE_PREFIX + "0) ")
    assert len(first.new_triples) == traj.ledger.total_num == 20
    assert step(env, traj, a, cfg).text == STATE_PREFIX + NO_NEW_PATHWAYS


def test_second_observation_continues_numbering(env):
    traj = Trajectory()
    cfg = AgentConfig(default_n=5)
    step(env, traj, Action(ActionKind.GLOBAL, ("ethanol, alcoholic liver disease",)), cfg)
    n = traj.ledger.total_num
    obs = step(env, traj, Action(ActionKind.GLOBAL, ("insulin, adiponectin, fatty acid",)), cfg)
    if obs.new_triples:
        assert obs.body.startswith(f"{n}) ")


def test_extra_tools_gated(env):
    traj = Trajectory()
    obs = step(env, traj, Action(ActionKind.NODE, ("ethanol",)), AgentConfig())
    assert "not available" in obs.text
    obs = step(env, traj, Action(ActionKind.NODE, ("ethanol",)), AgentConfig(extra_tools=True))
    assert "C00469" in obs.text
    assert traj.api_counts["other"] == 2


# -- loop ---------------------------------------------------------------------------


def case_script():
    return case_session()["turns"] + ["Yes. Adiponectin protects against alcoholic liver steatosis."]


def test_replay_case(env):
    s = case_session()
    client = ScriptedClient(case_script())
    traj = run_agent(TaskInstruction(s["question"]), env, AgentConfig(), client, sleep=no_sleep)
    assert traj.api_counts == {"global": 1, "local": 2, "other": 0}
    assert traj.finished and not traj.errored
    assert traj.step_count == 4
    assert traj.final_answer.startswith("Yes.")
    assert client.requests[0][1]["content"] == TASK_INTRO + s["question"]


def test_replay_is_deterministic(env):
    s = case_session()
    runs = [
        run_agent(TaskInstruction(s["question"]), env, AgentConfig(), ScriptedClient(case_script()), sleep=no_sleep).to_json()
        for _ in range(3)
    ]
    assert runs[0] == runs[1] == runs[2]


def test_final_reasoner_sees_observations_only(env):
    s = case_session()
    client = ScriptedClient(case_script())
    traj = run_agent(TaskInstruction(s["question"]), env, AgentConfig(), client, sleep=no_sleep)
    final_user = client.requests[-1][-1]["content"]
    assert s["question"] in final_user
    assert "Thought:" not in final_user and "search_biopathway" not in final_user
    assert STATE_PREFIX not in final_user
    assert traj.observations[0].body.splitlines()[0] in final_user


def test_parse_retry_then_degrade(env):
    client = ScriptedClient(["I am not sure.", "Still unsure.", "Final: No"])
    traj = run_agent(TaskInstruction("Q?"), env, AgentConfig(), client, sleep=no_sleep)
    assert traj.parse_retries == 1 and traj.parse_degraded
    assert traj.step_count == 1 and traj.steps[0].action.kind is ActionKind.FINISH
    assert client.requests[1][-1]["content"] == STATE_PREFIX + RETRY_PROMPT


def test_parse_retry_recovers(env):
    client = ScriptedClient(["hmm", "Finished.", "No"])
    traj = run_agent(TaskInstruction("Q?"), env, AgentConfig(), client, sleep=no_sleep)
    assert traj.parse_retries == 1 and not traj.parse_degraded
    assert traj.final_answer == "No"


def test_max_steps(env):
    client = ScriptedClient(["search_biopathway_subgraph_global(['ethanol'])", "Yes"])
    traj = run_agent(TaskInstruction("Q?"), env, AgentConfig(max_steps=1), client, sleep=no_sleep)
    assert traj.step_count == 1 and not traj.finished
    assert traj.final_answer == "Yes"


def test_transport_failure_marks_errored(env):
    class Down:
        calls = 0

        def complete(self, messages, **kw):
            Down.calls += 1
            raise ChatTransportError("boom")

    traj = run_agent(TaskInstruction("Q?"), env, AgentConfig(), Down(), sleep=no_sleep)
    assert traj.errored and "boom" in traj.error
    assert Down.calls == 4


def test_on_event_stream(env):
    events = []
    run_agent(TaskInstruction("Q?"), env, AgentConfig(), ScriptedClient(["Finished.", "No"]), sleep=no_sleep, on_event=events.append)
    assert [e["event"] for e in events] == ["step", "done"]


def test_write_trajectory(tmp_path, env):
    traj = run_agent(TaskInstruction("Q?", task_id="t/1"), env, AgentConfig(), ScriptedClient(["Finished.", "No"]), sleep=no_sleep)
    path = write_trajectory(traj, tmp_path, AgentConfig())
    data = json.loads(path.read_text())
    assert data["task_id"] == "t/1" and "config" in data and "elapsed" in data


def test_preamble_lists_tools():
    assert "search_biopathway_triple_N_hop_subgraph" in build_preamble(AgentConfig())
    off = build_preamble(AgentConfig(toggles=Toggles(local_search=False)))
    assert "search_biopathway_triple_N_hop_subgraph" not in off
    assert "search_biopathway_node" in build_preamble(AgentConfig(extra_tools=True))


def test_config_validation():
    with pytest.raises(ValueError):
        AgentConfig(max_steps=0)
    with pytest.raises(ValueError):
        TaskInstruction("  ")
    with pytest.raises(ValueError):
        TaskInstruction("Q?", answer_mode="essay")


# -- clients ---------------------------------------------------------------------


def test_scripted_exhaustion_is_not_retried():
    client = ScriptedClient([])
    with pytest.raises(ScriptExhausted):
        complete_with_retries(client, [], sleep=no_sleep)
    assert len(client.requests) == 1


def test_retries_back_off():
    waits = []
    state = {"n": 0}

    class Flaky:
        def complete(self, messages, **kw):
            state["n"] += 1
            if state["n"] < 3:
                raise ChatTransportError("later")
            return "ok"

    assert complete_with_retries(Flaky(), [], retries=3, backoff=0.5, sleep=waits.append) == "ok"
    assert waits == [0.5, 1.0]


def test_cached_client(tmp_path):
    inner = ScriptedClient(["one", "two"])
    cached = CachedClient(inner, tmp_path)
    msgs = [{"role": "user", "content": "hi"}]
    assert cached.complete(msgs, temperature=0.0) == "one"
    assert cached.complete(msgs, temperature=0.0) == "one"
    assert cached.complete(msgs, temperature=0.5) == "two"
    assert (cached.hits, cached.misses) == (1, 2)
    again = CachedClient(ScriptedClient([]), tmp_path)
    again.model = cached.model
    assert again.complete(msgs, temperature=0.0) == "one"


def test_http_client_roundtrip():
    seen = {}

    def handler(request: httpx.Request):
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": "Yes"}}]})

    client = HttpChatClient("http://model/v1/", "m", api_key="k", transport=httpx.MockTransport(handler))
    assert client.complete([{"role": "user", "content": "q"}], temperature=0.0, seed=None) == "Yes"
    assert seen["body"] == {"model": "m", "messages": [{"role": "user", "content": "q"}], "temperature": 0.0}
    assert seen["auth"] == "Bearer k"


def test_http_client_errors():
    client = HttpChatClient("http://model/v1", "m", transport=httpx.MockTransport(lambda r: httpx.Response(500)))
    with pytest.raises(ChatTransportError):
        client.complete([])
    bad = HttpChatClient("http://model/v1", "m", transport=httpx.MockTransport(lambda r: httpx.Response(200, json={})))
    with pytest.raises(ChatTransportError):
        bad.complete([])


def test_final_reason_direct():
    graph = make_graph([("A", "B")])
    env = SubgraphRetriever().fit(graph)
    traj = Trajectory()
    a = Action(ActionKind.GLOBAL, ("nameA",))
    traj.steps.append(Step(a, step(env, traj, a, AgentConfig())))
    client = ScriptedClient(["No"])
    assert final_reason(TaskInstruction("Q?", "open_ended"), traj, client, sleep=no_sleep) == "No"
    assert "0) A: nameA" in client.requests[0][1]["content"]
