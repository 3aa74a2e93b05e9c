import pytest

from whysim.orchestrator import (
    EVAL_PLACEHOLDERS,
    MissingBinding,
    PromptTemplate,
    TEMPLATE_KINDS,
    UnknownPlaceholder,
    fill_template,
    load_session_templates,
    load_template,
)


def test_fill_basic():
    t = PromptTemplate(kind="interrogation", body="round <N> of <N_MAX>")
    assert fill_template(t, {"N": "3", "N_MAX": "10"}) == "round 3 of 10"


def test_fill_empty_binding_allowed():
    t = PromptTemplate(kind="context", body="intro <OCCLUSIONS> outro")
    assert fill_template(t, {"OCCLUSIONS": ""}) == "intro  outro"


def test_missing_binding():
    t = PromptTemplate(kind="final", body="question: <USER_PROMPT>")
    with pytest.raises(MissingBinding) as err:
        fill_template(t, {})
    assert err.value.name == "USER_PROMPT"


def test_unknown_placeholder_rejected_at_load():
    with pytest.raises(UnknownPlaceholder):
        PromptTemplate(kind="system", body="hello <WHO_AM_I>")


def test_no_recursive_expansion():
    t = PromptTemplate(kind="context", body="<CONTEXT>")
    out = fill_template(t, {"CONTEXT": "<USER_PROMPT>"})
    assert out == "<USER_PROMPT>"


def test_all_session_templates_load():
    templates = load_session_templates()
    assert set(templates) == set(TEMPLATE_KINDS)
    for template in templates.values():
        assert template.placeholders()


@pytest.mark.parametrize("kind", ["eval_preferences", "eval_correctness",
                                  "eval_actionability"])
def test_eval_templates_load(kind):
    template = load_template(kind, EVAL_PLACEHOLDERS)
    assert set(template.placeholders()) <= EVAL_PLACEHOLDERS
