"""Directional check for the prompt-prefixing baseline.

Acceptance bound: on 50 replacement fixtures whose update sentences are
prefixed to the prompt, the model prefers the new object over the old one
in at least 80% of cases.
"""
import math
import random

import pytest

from tinymodel import OBJECTS, SUBJECTS


def geometric(logprobs):
    return math.exp(sum(logprobs) / len(logprobs))


@pytest.fixture(scope="module")
def fixture_cases():
    rng = random.Random(99)
    cases = []
    for i in range(50):
        subject = rng.choice(SUBJECTS)
        new, old = rng.sample(OBJECTS, 2)
        cases.append({
            "case_id": f"case-{i:02d}",
            "subject": subject,
            "new": new,
            "old": old,
            "update_sentence": f"the president of {subject} is {new}",
            "cloze": f"the president of {subject} is",
        })
    return cases


class TestPromptBaseline:
    def test_efficacy_success_at_least_80_percent(self, trained_session,
                                                  fixture_cases, capsys):
        requests = [
            {"case_id": case["case_id"], "kind": "score",
             "prompt": case["cloze"],
             "continuations": [case["new"], case["old"]],
             "max_new_tokens": 100}
            for case in fixture_cases
        ]
        prefix_map = {case["case_id"]: case["update_sentence"]
                      for case in fixture_cases}
        responses = trained_session.run(requests, prefix_map)
        wins = 0
        for response in responses:
            p_new = geometric(response["logprobs"][0])
            p_old = geometric(response["logprobs"][1])
            wins += p_new > p_old
        rate = wins / len(responses)
        with capsys.disabled():
            print(f"[{'PASS' if rate >= 0.80 else 'FAIL'}] "
                  f"prompt-baseline efficacy success {rate:.2f} >= 0.80")
        assert rate >= 0.80

    def test_neighbor_request_keeps_cases_prefix(self, trained_session,
                                                 fixture_cases):
        """A neighbor cloze scored under some case id gets that case's
        update sentence, not one derived from the neighbor itself."""
        case = fixture_cases[0]
        other = fixture_cases[1]
        neighbor_request = {
            "case_id": case["case_id"], "kind": "score",
            "prompt": other["cloze"],
            "continuations": [other["new"]], "max_new_tokens": 100,
        }
        prefix_map = {case["case_id"]: case["update_sentence"]}
        got = trained_session.run([neighbor_request], prefix_map)[0]
        manual = trained_session.score(
            case["update_sentence"] + ". " + other["cloze"], [other["new"]])
        assert got["logprobs"] == manual

    def test_empty_request_file_round_trip(self, trained_session):
        assert trained_session.run([], {}) == []
