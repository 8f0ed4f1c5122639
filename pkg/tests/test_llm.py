import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siblingfix.llm import (BackendError, CompletionRequest, Patch, PatchEdit,
                            PatchParseError, RemoteChatBackend,
                            ScriptedBackend, combine, complete, parse_patch,
                            render_patch)


def block(file, method, body):
    return f"=== PATCH file={file} method={method} ===\n```\n{body}\n```\n"


def test_parse_two_blocks():
    text = "reasoning...\n" + block("A.java", "f", "int f(){}") \
        + "\n" + block("B.java", "g", "int g(){}")
    patch = parse_patch(text)
    assert [(e.file, e.method, e.body) for e in patch.edits] == [
        ("A.java", "f", "int f(){}"), ("B.java", "g", "int g(){}")]
    assert patch.provenance == "generated"


def test_parse_prose_only():
    with pytest.raises(PatchParseError):
        parse_patch("I believe the bug is in the loop condition.")


def test_parse_unterminated_fence():
    text = "=== PATCH file=A.java method=f ===\n```\nint f(){}"
    with pytest.raises(PatchParseError) as err:
        parse_patch(text)
    assert err.value.offset >= 0


def test_duplicate_block_last_wins():
    text = block("A.java", "f", "first") + "\n" + block("A.java", "f", "second")
    patch = parse_patch(text)
    assert len(patch.edits) == 1
    assert patch.edits[0].body == "second"


def test_render_parse_roundtrip():
    patch = Patch(edits=(
        PatchEdit("x/A.java", "f", "int f() {\n  return 1;\n}"),
        PatchEdit("B.java", "g", "void g() {}"),
    ))
    again = parse_patch(render_patch(patch))
    assert again.edits == patch.edits


_BODY = st.text(
    alphabet=string.ascii_letters + string.digits + " \n{}();=+-",
    min_size=1, max_size=60)


@settings(max_examples=60, deadline=None)
@given(st.lists(
    st.tuples(st.sampled_from(["A.java", "b/C.java"]),
              st.sampled_from(["f", "g", "h"]), _BODY),
    min_size=1, max_size=3, unique_by=lambda t: (t[0], t[1])))
def test_roundtrip_property(edits):
    patch = Patch(edits=tuple(PatchEdit(*e) for e in edits))
    assert parse_patch(render_patch(patch)).edits == patch.edits


def test_patch_id_order_independent():
    a = Patch(edits=(PatchEdit("A", "f", "x"), PatchEdit("B", "g", "y")))
    b = Patch(edits=(PatchEdit("B", "g", "y"), PatchEdit("A", "f", "x")))
    assert a.id == b.id
    c = Patch(edits=(PatchEdit("A", "f", "z"),))
    assert a.id != c.id


def test_combine_disjoint_union():
    gen = Patch(edits=(PatchEdit("A", "f", "new-f"),))
    pro = Patch(edits=(PatchEdit("B", "g", "pro-g"),))
    out = combine(gen, pro)
    assert {(e.file, e.method, e.body) for e in out.edits} == {
        ("A", "f", "new-f"), ("B", "g", "pro-g")}
    assert out.provenance == "combined"
    assert out.parent_id == pro.id


def test_combine_collision_generated_wins():
    gen = Patch(edits=(PatchEdit("A", "f", "generated"),))
    pro = Patch(edits=(PatchEdit("A", "f", "promising"),))
    out = combine(gen, pro)
    assert [e.body for e in out.edits] == ["generated"]


def test_combine_identity_and_idempotence():
    gen = Patch(edits=(PatchEdit("A", "f", "x"),))
    assert combine(gen, Patch(edits=())).edits == gen.edits
    assert set(combine(gen, gen).edits) == set(gen.edits)


def test_combine_associative_on_disjoint():
    p1 = Patch(edits=(PatchEdit("A", "f", "1"),))
    p2 = Patch(edits=(PatchEdit("B", "g", "2"),))
    p3 = Patch(edits=(PatchEdit("C", "h", "3"),))
    left = combine(combine(p1, p2), p3)
    right = combine(p1, combine(p2, p3))
    assert set(left.edits) == set(right.edits)


def test_scripted_backend(tmp_path):
    (tmp_path / "loc1_attempt1.txt").write_text("hello", encoding="utf-8")
    backend = ScriptedBackend(tmp_path)
    req = CompletionRequest(prompt="p", location_id="loc1", attempt=1)
    assert complete(req, backend) == "hello"
    with pytest.raises(BackendError):
        backend.complete(CompletionRequest(prompt="p", location_id="loc1",
                                           attempt=2))
    soft = ScriptedBackend(tmp_path, on_missing="empty")
    assert soft.complete(CompletionRequest(prompt="p", location_id="loc1",
                                           attempt=2)) == ""


def test_temperature_validated():
    with pytest.raises(ValueError):
        CompletionRequest(prompt="p", temperature=-0.1)


class FakeResponse:
    def __init__(self, payload=None, fail=False):
        self.payload, self.fail = payload, fail

    def raise_for_status(self):
        if self.fail:
            import requests
            raise requests.HTTPError("500")

    def json(self):
        return self.payload


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def post(self, *args, **kwargs):
        self.calls += 1
        return self.responses.pop(0)


def test_remote_backend_retries_then_succeeds():
    ok = FakeResponse({"choices": [{"message": {"content": "patched"}}]})
    session = FakeSession([FakeResponse(fail=True), FakeResponse(fail=True), ok])
    backend = RemoteChatBackend("http://x", "model", session=session,
                                sleep=lambda s: None)
    assert backend.complete(CompletionRequest(prompt="p")) == "patched"
    assert session.calls == 3


def test_remote_backend_exhausts_retries():
    session = FakeSession([FakeResponse(fail=True)] * 4)
    backend = RemoteChatBackend("http://x", "model", session=session,
                                sleep=lambda s: None)
    with pytest.raises(BackendError):
        backend.complete(CompletionRequest(prompt="p"))
    assert session.calls == 4
