import json
from pathlib import Path

import httpx
import pytest

from planverify.ltlf import load_constraints
from planverify.plan_model import Task, build_plan, load_plan, load_resources

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def gear_plan():
    return load_plan(FIXTURES / "gear_plan.json",
                     load_resources(FIXTURES / "gear_resources.json"))


@pytest.fixture
def gear_resources():
    return load_resources(FIXTURES / "gear_resources.json")


@pytest.fixture
def gear_constraints():
    return load_constraints(FIXTURES / "gear_constraints.json")


def make_task(tid, function="move_loaded", part="", resource="", process="assembly",
              source="", dest="station", predecessors=()):
    return Task(id=tid, function=function, part=part or tid.lower(),
                resource=resource or f"arm_{tid.lower()}", process=process,
                source_context=source, dest_context=dest,
                predecessors=tuple(predecessors))


def make_plan(*tasks, plan_id="test_plan"):
    return build_plan(tasks, plan_id=plan_id)


def chat_transport(reply, status_code=200):
    """MockTransport for the chat-completions wire format.

    ``reply`` is either the assistant content string or a callable taking the
    decoded request body and returning the content string.
    """

    def handler(request: httpx.Request) -> httpx.Response:
        if status_code != 200:
            return httpx.Response(status_code, json={"error": "nope"})
        body = json.loads(request.content.decode("utf-8"))
        content = reply(body) if callable(reply) else reply
        return httpx.Response(200, json={
            "choices": [{"message": {"role": "assistant", "content": content}}]})

    return httpx.MockTransport(handler)
