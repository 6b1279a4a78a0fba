from __future__ import annotations

import logging

import pytest

from conftest import png_bytes
from fixture_scripts import REFUSAL_TEXT, extract_entry, fenced, interpret_entry, obs

from htpscreen.agents import (
    AgentError,
    AgentRuntime,
    AgentStepOutput,
    EmptyExtraction,
    extract_features,
    interpret_features,
    parse_structured_block,
    run_agent,
)
from htpscreen.clocks import SimulatedClock
from htpscreen.domain import Aspect, DrawingSubmission, ImagePayload, SubmissionSource
from htpscreen.gateway import MockProvider, ModelGateway, ModelRole, RetryExhausted, ScriptEntry
from htpscreen.taxonomy import load_default_taxonomy

TAXONOMY = load_default_taxonomy()


def submission() -> DrawingSubmission:
    clock = SimulatedClock()
    return DrawingSubmission(
        id="sub-test",
        image=ImagePayload("image/png", png_bytes()),
        received_at=clock.utcnow(),
        source=SubmissionSource.FIXTURE,
        grade_tag="grade-3",
    )


def runtime_for(script: dict, attempts=None) -> AgentRuntime:
    clock = SimulatedClock()
    entries = {
        tid: [ScriptEntry(**e) if isinstance(e, dict) else e for e in items]
        for tid, items in script.items()
    }
    gateway = ModelGateway(
        providers={role: MockProvider(entries, clock=clock) for role in ModelRole},
        clock=clock,
    )
    sink = None
    if attempts is not None:
        def sink(step, record):
            attempts.append((step, record.outcome_kind))
    return AgentRuntime(taxonomy=TAXONOMY, gateway=gateway, attempt_sink=sink)


class TestSamplingPassthrough:
    def test_runtime_sampling_reaches_requests(self):
        from htpscreen.gateway import Provider, SamplingParams

        seen = []

        class Spy(Provider):
            def send(self, req):
                seen.append(req.params)
                return fenced([{"feature_id": "tree.fruit", "value": "fruit_bearing"}])

        clock = SimulatedClock()
        gateway = ModelGateway(providers={role: Spy() for role in ModelRole}, clock=clock)
        runtime = AgentRuntime(
            taxonomy=TAXONOMY, gateway=gateway,
            sampling=SamplingParams(temperature=0.7, top_p=0.9),
        )
        extract_features(Aspect.TREE, submission(), runtime, "t")
        assert seen[0].temperature == 0.7
        assert seen[0].top_p == 0.9


class TestParseStructuredBlock:
    def test_prose_plus_block(self):
        out = parse_structured_block("Some reasoning first.\n```json\n[1, 2]\n```\nthanks")
        assert out.parsed == [1, 2]
        assert not out.parse_errors

    def test_two_blocks_last_wins_with_warning(self):
        text = "```json\n[1]\n```\nrevised:\n```json\n[2]\n```"
        out = parse_structured_block(text)
        assert out.parsed == [2]
        assert any("using the last one" in w for w in out.warnings)

    def test_no_block(self):
        out = parse_structured_block("no fences here")
        assert out.parsed is None
        assert out.parse_errors == ("no structured block",)

    def test_invalid_json_in_block(self):
        out = parse_structured_block("```json\n{broken\n```")
        assert out.parsed is None
        assert "not valid JSON" in out.parse_errors[0]

    def test_unfenced_language_tag_optional(self):
        out = parse_structured_block("```\n{\"a\": 1}\n```")
        assert out.parsed == {"a": 1}

    def test_output_invariant_enforced(self):
        with pytest.raises(ValueError):
            AgentStepOutput(raw_text="x")  # neither parsed nor errors


class TestExtractFeatures:
    def test_valid_observations_returned(self):
        script = {
            "stage1.person.extract": [extract_entry([
                obs("person.figure_content", "hanging_figure"),
                obs("person.posture", "slumped"),
            ])]
        }
        found = extract_features(Aspect.PERSON, submission(), runtime_for(script), "t")
        assert [o.feature_id for o in found] == ["person.figure_content", "person.posture"]
        assert found[0].value == "hanging_figure"
        assert all(o.aspect is Aspect.PERSON for o in found)

    def test_out_of_domain_dropped_with_warning(self, caplog):
        script = {
            "stage1.tree.extract": [extract_entry([
                obs("tree.fruit", "fruit_bearing"),
                obs("tree.fruit", "made_up_value"),
                obs("tree.foliage_density", "full"),
            ])]
        }
        with caplog.at_level(logging.WARNING):
            found = extract_features(Aspect.TREE, submission(), runtime_for(script), "t")
        assert len(found) == 2
        assert any("dropped observation" in r.message for r in caplog.records)

    def test_unknown_feature_dropped(self):
        script = {
            "stage1.tree.extract": [extract_entry([
                obs("tree.invented_feature", "x"),
                obs("tree.fruit", "fruit_bearing"),
            ])]
        }
        found = extract_features(Aspect.TREE, submission(), runtime_for(script), "t")
        assert [o.feature_id for o in found] == ["tree.fruit"]

    def test_cross_aspect_feature_dropped(self):
        script = {
            "stage1.tree.extract": [extract_entry([
                obs("house.doors", "absent"),
                obs("tree.fruit", "none"),
            ])]
        }
        found = extract_features(Aspect.TREE, submission(), runtime_for(script), "t")
        assert [o.feature_id for o in found] == ["tree.fruit"]

    def test_zero_valid_retries_once_then_fails(self):
        script = {
            "stage1.tree.extract": [
                extract_entry([obs("tree.fruit", "bogus")]),
                extract_entry([obs("tree.fruit", "also_bogus")]),
            ]
        }
        with pytest.raises(EmptyExtraction):
            extract_features(Aspect.TREE, submission(), runtime_for(script), "t")

    def test_zero_valid_then_recovery(self):
        script = {
            "stage1.tree.extract": [
                extract_entry([]),
                extract_entry([obs("tree.fruit", "fruit_bearing")]),
            ]
        }
        found = extract_features(Aspect.TREE, submission(), runtime_for(script), "t")
        assert len(found) == 1

    def test_malformed_block_reparsed_after_retry(self):
        script = {
            "stage1.tree.extract": [
                {"text": "no fenced block at all"},
                extract_entry([obs("tree.fruit", "fruit_bearing")]),
            ]
        }
        found = extract_features(Aspect.TREE, submission(), runtime_for(script), "t")
        assert [o.feature_id for o in found] == ["tree.fruit"]

    def test_refusal_recovered_by_gateway_retry(self):
        attempts = []
        script = {
            "stage1.person.extract": [
                {"text": REFUSAL_TEXT},
                extract_entry([obs("person.posture", "slumped")]),
            ]
        }
        found = extract_features(
            Aspect.PERSON, submission(), runtime_for(script, attempts), "t"
        )
        assert len(found) == 1
        assert ("person.extract", "refusal") in attempts


class TestInterpretFeatures:
    def observations(self):
        from htpscreen.domain import FeatureObservation

        return [FeatureObservation("house.doors", Aspect.HOUSE, "absent")]

    def test_interpretation_returned(self):
        script = {"stage1.house.interpret": [interpret_entry("家庭边界感较强，值得关注。")]}
        text = interpret_features(
            Aspect.HOUSE, self.observations(), submission(), runtime_for(script), "t"
        )
        assert text == "家庭边界感较强，值得关注。"

    def test_empty_observations_precondition(self):
        with pytest.raises(ValueError):
            interpret_features(Aspect.HOUSE, [], submission(), runtime_for({}), "t")

    def test_over_cap_truncated_with_marker(self, caplog):
        runtime = runtime_for(
            {"stage1.house.interpret": [interpret_entry("长" * 3000)]}
        )
        with caplog.at_level(logging.WARNING):
            text = interpret_features(
                Aspect.HOUSE, self.observations(), submission(), runtime, "t"
            )
        assert len(text) == runtime.interpretation_cap
        assert text.endswith("…")
        assert any("truncating" in r.message for r in caplog.records)

    def test_empty_interpretation_retried_then_fails(self):
        script = {
            "stage1.house.interpret": [
                {"text": fenced({"interpretation": ""})},
                {"text": fenced({"interpretation": "  "})},
            ]
        }
        with pytest.raises(AgentError):
            interpret_features(
                Aspect.HOUSE, self.observations(), submission(), runtime_for(script), "t"
            )


class TestRunAgent:
    def test_full_composition(self):
        script = {
            "stage1.tree.extract": [extract_entry([obs("tree.fruit", "fruit_bearing")])],
            "stage1.tree.interpret": [interpret_entry("积极的自我能量表现。")],
        }
        report = run_agent(Aspect.TREE, submission(), runtime_for(script), "trace.tree")
        assert report.aspect is Aspect.TREE
        assert len(report.observations) == 1
        assert report.interpretation
        assert report.model_trace_id == "trace.tree"

    def test_extract_refusal_then_success_still_produces_report(self):
        attempts = []
        script = {
            "stage1.tree.extract": [
                {"text": REFUSAL_TEXT},
                extract_entry([obs("tree.fruit", "fruit_bearing")]),
            ],
            "stage1.tree.interpret": [interpret_entry("ok")],
        }
        report = run_agent(Aspect.TREE, submission(), runtime_for(script, attempts), "t")
        assert report.interpretation == "ok"
        extract_attempts = [a for a in attempts if a[0] == "tree.extract"]
        assert [kind for _, kind in extract_attempts] == ["refusal", "ok"]

    def test_interpret_exhaustion_surfaces(self):
        script = {
            "stage1.tree.extract": [extract_entry([obs("tree.fruit", "fruit_bearing")])],
            "stage1.tree.interpret": [{"error": "network"}] * 6,
        }
        with pytest.raises(RetryExhausted):
            run_agent(Aspect.TREE, submission(), runtime_for(script), "t")

    def test_hook_runs_between_steps(self):
        seen = {}

        def hook(aspect, observations):
            seen["aspect"] = aspect
            seen["count"] = len(observations)

        script = {
            "stage1.tree.extract": [extract_entry([obs("tree.fruit", "fruit_bearing")])],
            "stage1.tree.interpret": [interpret_entry("ok")],
        }
        run_agent(Aspect.TREE, submission(), runtime_for(script), "t", on_extracted=hook)
        assert seen == {"aspect": Aspect.TREE, "count": 1}

    def test_determinism_under_fixed_script(self):
        script = {
            "stage1.tree.extract": [extract_entry([obs("tree.fruit", "fruit_bearing")])],
            "stage1.tree.interpret": [interpret_entry("ok")],
        }
        a = run_agent(Aspect.TREE, submission(), runtime_for(script), "t")
        b = run_agent(Aspect.TREE, submission(), runtime_for(script), "t")
        assert a == b
