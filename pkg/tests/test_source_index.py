import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siblingfix.source_index import (IndexError_, Statement, StaleRefError,
                                     identifiers_in, index_source, mask_code)


def write(tmp_path, name, text):
    (tmp_path / name).write_text(text, encoding="utf-8")


def test_empty_project(tmp_path):
    index = index_source(tmp_path, ["**/*.java"])
    assert index.files == {}


def test_single_method_single_statement(tmp_path):
    write(tmp_path, "F.java", "int f(){ return 1; }\n")
    index = index_source(tmp_path, ["*.java"])
    sf = index.files["F.java"]
    assert [m.name for m in sf.methods] == ["f"]
    simple = [s for s in sf.statements if s.kind == "simple"]
    assert [s.text for s in simple] == ["return 1;"]


def test_unbalanced_braces_fall_back_linewise(tmp_path):
    write(tmp_path, "Bad.java", "class Bad {\n  int x;\n")
    index = index_source(tmp_path, ["*.java"])
    assert index.files["Bad.java"].line_wise
    assert any("Bad.java" in w for w in index.warnings)
    # Line-wise statements still cover every non-blank line.
    assert [s.start_line for s in index.files["Bad.java"].statements] == [1, 2]


NESTED = """\
class C {
    void outer() {
        int a = 1;
        Runnable r = new Runnable() {
            public void run() {
                int b = 2;
            }
        };
    }

    void later() {
        int c = 3;
    }
}
"""


def test_enclosing_method_rules(tmp_path):
    write(tmp_path, "C.java", NESTED)
    index = index_source(tmp_path, ["*.java"])
    assert index.enclosing_method("C.java", 3).name == "outer"
    # Between two methods: no enclosing method.
    assert index.enclosing_method("C.java", 10) is None
    # Innermost span wins for the nested declaration.
    inner = index.enclosing_method("C.java", 6)
    assert inner.name == "run"
    # Brute-force oracle: absent iff no span contains the line.
    methods = index.files["C.java"].methods
    for line in range(1, 15):
        hit = index.enclosing_method("C.java", line)
        assert (hit is None) == (not any(m.contains(line) for m in methods))


def test_enclosing_method_unknown_file(tmp_path):
    write(tmp_path, "C.java", NESTED)
    index = index_source(tmp_path, ["*.java"])
    with pytest.raises(IndexError_):
        index.enclosing_method("Missing.java", 1)


def stmt(text):
    return Statement(file="x", start_line=1, end_line=1, text=text, kind="simple")


def test_identifiers_classification():
    ids = identifiers_in(stmt("double[] sig = problem.getUnboundParameters();"))
    assert [(i.kind, i.name) for i in ids] == [
        ("variable", "sig"), ("variable", "problem"),
        ("call", "getUnboundParameters"),
    ]


def test_identifiers_keyword_only():
    assert identifiers_in(stmt("return;")) == []


def test_identifiers_chained_access():
    ids = [(i.kind, i.name) for i in identifiers_in(stmt("a.b.c(d)"))]
    assert ("field-access", "b") in ids
    assert ("call", "c") in ids
    assert ("variable", "a") in ids
    assert ("variable", "d") in ids
    assert len(ids) == 4


def test_method_body_roundtrip_and_stale(tmp_path):
    write(tmp_path, "F.java", "class F {\n  int f() {\n    return 1;\n  }\n}\n")
    index = index_source(tmp_path, ["*.java"])
    ref = index.methods_named("F.java", "f")[0]
    assert index.method_body(ref) == "  int f() {\n    return 1;\n  }"
    # A ref from a previous index generation is stale after the file changes.
    write(tmp_path, "F.java", "class F {\n  int f() {\n    return 2;\n  }\n}\n")
    fresh = index_source(tmp_path, ["*.java"])
    with pytest.raises(StaleRefError):
        fresh.method_body(ref)


def test_one_line_method_body(tmp_path):
    write(tmp_path, "F.java", "int g(){ return 7; }\n")
    index = index_source(tmp_path, ["*.java"])
    ref = index.methods_named("F.java", "g")[0]
    assert index.method_body(ref) == "int g(){ return 7; }"


def test_mask_code_preserves_length_and_newlines():
    text = 'int x = 1; // trailing "quote\nString s = "a;{b}"; /* c\nd */ int y;\n'
    masked = mask_code(text)
    assert len(masked) == len(text)
    assert masked.count("\n") == text.count("\n")
    assert "{" not in masked.split("\n")[1]  # brace inside string is masked


def test_statement_roundtrip_order(mini_index):
    """Statements appear in order as verbatim, non-overlapping file slices."""
    for sf in mini_index.files.values():
        pos = 0
        for s in sf.statements:
            idx = sf.text.index(s.text, pos)
            assert idx >= pos
            pos = idx + len(s.text)


def test_reindex_deterministic(tmp_path):
    write(tmp_path, "C.java", NESTED)
    a = index_source(tmp_path, ["*.java"])
    b = index_source(tmp_path, ["*.java"])
    assert a.files["C.java"] == b.files["C.java"]


_WORD = st.text(alphabet=string.ascii_lowercase, min_size=1, max_size=6)


@settings(max_examples=50, deadline=None)
@given(st.lists(_WORD, min_size=0, max_size=8))
def test_generated_methods_index_cleanly(tmp_path_factory, names):
    tmp = tmp_path_factory.mktemp("gen")
    body = "class G {\n"
    for i, name in enumerate(names):
        body += f"  int m{i}{name}() {{\n    int v = {i};\n    return v;\n  }}\n"
    body += "}\n"
    (tmp / "G.java").write_text(body, encoding="utf-8")
    index = index_source(tmp, ["*.java"])
    sf = index.files["G.java"]
    assert not sf.line_wise
    assert len(sf.methods) == len(names)
    # Every simple statement lies inside the method that encloses its line.
    for s in sf.statements:
        if s.kind == "simple":
            m = index.enclosing_method("G.java", s.start_line)
            assert m is not None and m.contains(s.start_line)
