import random

import pytest

from problemforge.difficulty import (
    DifficultyReport,
    GeneratedProblem,
    assess,
    compute_delta,
    generate_solutions,
    generate_test_inputs,
    majority_vote,
    parse_test_inputs,
)
from problemforge.executor import ExecutionMatrix

DELTA_4_2 = 0.25  # M=4, T=2, counts [4,2]: hand-derived


def matrix_from(rows, problem_id="p"):
    t = len(rows[0])
    return ExecutionMatrix(
        problem_id=problem_id,
        inputs=tuple(str(i) for i in range(t)),
        programs=tuple(f"prog{m}" for m in range(len(rows))),
        outputs=tuple(tuple(row) for row in rows),
    )


def oracle_vote(rows):
    """Brute-force recount: no Counter, no shared code with the implementation."""
    m, t = len(rows), len(rows[0])
    outputs, counts, absent = [], [], 0
    for col in range(t):
        column = [rows[row][col] for row in range(m)]
        absent += sum(1 for o in column if o is None)
        best_out, best_count = None, 0
        for candidate in column:
            if candidate is None:
                continue
            count = sum(1 for o in column if o == candidate)
            if count > best_count or (count == best_count and candidate < best_out):
                best_out, best_count = candidate, count
        outputs.append(best_out)
        counts.append(best_count)
    return outputs, counts, absent / (m * t)


def oracle_delta(counts, m, t):
    return 1.0 - (sum(c / m for c in counts) / t)


def test_majority_plurality():
    outputs, counts, _ = majority_vote(matrix_from([["4"], ["4"], ["7"]]))
    assert outputs == ("4",) and counts == (2,)


def test_majority_tie_breaks_lexicographically():
    outputs, counts, _ = majority_vote(matrix_from([["b"], ["a"]]))
    assert outputs == ("a",) and counts == (1,)


def test_majority_all_absent_column():
    outputs, counts, nf = majority_vote(matrix_from([[None, "1"], [None, "1"]]))
    assert outputs == (None, "1")
    assert counts == (0, 2)
    assert nf == 0.5


def test_majority_matches_oracle_on_random_matrices():
    rng = random.Random(101)
    values = ["0", "1", "2", "x", None]
    for _ in range(2000):
        m, t = rng.randint(2, 8), rng.randint(1, 20)
        rows = [[rng.choice(values) for _ in range(t)] for _ in range(m)]
        got = majority_vote(matrix_from(rows))
        expected = oracle_vote(rows)
        assert got[0] == tuple(expected[0])
        assert got[1] == tuple(expected[1])
        assert got[2] == expected[2]
        assert compute_delta(got[1], m, t) == oracle_delta(expected[1], m, t)


def test_delta_consensus_is_zero():
    assert compute_delta([4, 4, 4], m=4, t_effective=3) == 0.0


def test_delta_hand_value():
    assert compute_delta([4, 2], m=4, t_effective=2) == DELTA_4_2


def test_delta_all_distinct_m8():
    assert compute_delta([1] * 20, m=8, t_effective=20) == 0.875


def test_delta_validation():
    with pytest.raises(ValueError):
        compute_delta([1], m=4, t_effective=0)
    with pytest.raises(ValueError):
        compute_delta([1, 2], m=4, t_effective=1)
    with pytest.raises(ValueError):
        compute_delta([5], m=4, t_effective=1)


def test_delta_range_property():
    rng = random.Random(3)
    for _ in range(500):
        m, t = rng.randint(2, 8), rng.randint(1, 20)
        counts = [rng.randint(1, m) for _ in range(t)]  # every column has a winner
        delta = compute_delta(counts, m, t)
        assert 0.0 <= delta <= 1.0 - 1.0 / m + 1e-15


def test_delta_invariant_under_permutations():
    rng = random.Random(17)
    values = ["0", "1", None, "z"]
    for _ in range(300):
        m, t = rng.randint(2, 6), rng.randint(2, 8)
        rows = [[rng.choice(values) for _ in range(t)] for _ in range(m)]
        _, counts, _ = majority_vote(matrix_from(rows))
        base = compute_delta(counts, m, t)

        rows_shuffled = rows[:]
        rng.shuffle(rows_shuffled)  # permute solutions
        order = list(range(t))
        rng.shuffle(order)  # permute test inputs
        permuted = [[row[j] for j in order] for row in rows_shuffled]
        _, counts2, _ = majority_vote(matrix_from(permuted))
        # summation order may differ by an ulp, nothing more
        assert abs(compute_delta(counts2, m, t) - base) <= 1e-12


def test_consensus_monotonicity():
    # overwriting any non-majority cell with the column majority never raises delta
    rng = random.Random(29)
    values = ["0", "1", "2", None]
    for _ in range(300):
        m, t = rng.randint(2, 6), rng.randint(1, 6)
        rows = [[rng.choice(values) for _ in range(t)] for _ in range(m)]
        outputs, counts, _ = majority_vote(matrix_from(rows))
        before = compute_delta(counts, m, t)
        col = rng.randrange(t)
        if outputs[col] is None:
            continue
        for row in range(m):
            if rows[row][col] != outputs[col]:
                rows[row][col] = outputs[col]
                break
        _, counts2, _ = majority_vote(matrix_from(rows))
        assert compute_delta(counts2, m, t) <= before + 1e-15


def test_validity_monotone_in_added_outputs():
    rows = [["1", None], [None, None]]
    _, _, nf_before = majority_vote(matrix_from(rows))
    rows[1][0] = "1"
    _, _, nf_after = majority_vote(matrix_from(rows))
    assert nf_after < nf_before


def test_parse_test_inputs_blocks_and_duplicates():
    text = "```\n1 2\n```\nnoise\n```\n1 2\n```\n```text\n3\n```"
    assert parse_test_inputs(text) == ["1 2", "1 2", "3"]
    assert parse_test_inputs("no blocks here") == []
    assert parse_test_inputs("```\n\n```") == []


def _problem():
    return GeneratedProblem.create("prompt1", 0, "Given n, print n.")


def _blocks(n, start=0):
    return "\n".join(f"```\n{i + start}\n```" for i in range(n))


def test_generate_test_inputs_full_delivery(make_gateway):
    gateway = make_gateway(
        {"rules": [{"role": "test_input_gen", "response": _blocks(20)}]}
    )
    inputs = generate_test_inputs(_problem(), gateway, t=20)
    assert len(inputs) == 20


def test_generate_test_inputs_accumulates_across_retries(make_gateway):
    gateway = make_gateway(
        {"rules": [{"role": "test_input_gen", "responses": [_blocks(12), _blocks(8, 100)]}]}
    )
    inputs = generate_test_inputs(_problem(), gateway, t=20)
    assert len(inputs) == 20
    assert inputs[:12] == [str(i) for i in range(12)]


def test_generate_test_inputs_gives_what_exists(make_gateway, caplog):
    # first attempt yields 3 inputs, every retry yields none
    responses = [_blocks(3), "nothing", "nothing", "nothing"]
    gateway = make_gateway({"rules": [{"role": "test_input_gen", "responses": responses}]})
    with caplog.at_level("WARNING"):
        inputs = generate_test_inputs(_problem(), gateway, t=20)
    assert inputs == ["0", "1", "2"]
    assert "3/20" in caplog.text


def test_generate_test_inputs_zero_parseable(make_gateway):
    gateway = make_gateway({"rules": [{"role": "test_input_gen", "response": "no blocks"}]})
    assert generate_test_inputs(_problem(), gateway, t=5) == []


def test_generate_solutions_alignment_with_failures(make_gateway):
    # empty scripted texts become error results, which become placeholders
    responses = ["```\ncode0\n```", "", "```\ncode2\n```", "", "c", "c", "c", "c"]
    gateway = make_gateway(
        {"rules": [{"role": "solution_gen", "responses": responses}]}, max_retries=0
    )
    texts = generate_solutions(_problem(), gateway, m=8)
    assert len(texts) == 8
    assert texts[1] == texts[3] == ""
    assert "code0" in texts[0]


def test_generate_solutions_cache_determinism(make_gateway, tmp_path):
    script = {"rules": [{"role": "solution_gen", "responses": ["a", "b"]}]}
    gateway = make_gateway(script, cache_dir=tmp_path / "c")
    first = generate_solutions(_problem(), gateway, m=4)
    second = generate_solutions(_problem(), gateway, m=4)
    assert first == second == ["a", "b", "a", "b"]


def _assess_script(solutions, test_blocks=None):
    return {
        "rules": [
            {"role": "test_input_gen", "response": test_blocks or _blocks(4)},
            {"role": "solution_gen", "responses": solutions},
        ]
    }


def test_assess_consensus_problem(make_gateway, fake_pool):
    gateway = make_gateway(_assess_script(["```\nadd 1\n```"] * 4))
    report, matrix = assess(_problem(), gateway, fake_pool, t=4, m=4)
    assert report.valid
    assert report.delta == 0.0
    assert report.none_fraction == 0.0
    assert matrix.m == 4 and matrix.t == 4
    assert report.majority_outputs == ("1", "2", "3", "4")


def test_assess_flags_mostly_broken_problem(make_gateway, fake_pool):
    # 3 of 4 rows fail: 75% absent cells
    gateway = make_gateway(_assess_script(["```\nfail\n```"] * 3 + ["```\nadd 1\n```"]))
    report, _ = assess(_problem(), gateway, fake_pool, t=4, m=4)
    assert not report.valid
    assert report.none_fraction == 0.75
    assert report.reason == "high_none_fraction"


def test_assess_without_inputs_is_unusable(make_gateway, fake_pool):
    gateway = make_gateway(
        {
            "rules": [
                {"role": "test_input_gen", "response": "nothing here"},
                {"role": "solution_gen", "response": "```\necho\n```"},
            ]
        }
    )
    report, matrix = assess(_problem(), gateway, fake_pool, t=4, m=4)
    assert matrix is None
    assert (report.valid, report.reason) == (False, "no_test_inputs")
    assert report.delta == 1.0 and report.t == 0


def test_assess_disagreement_delta(make_gateway, fake_pool):
    # 2 solutions add 1, 2 solutions add 2: every column splits 2-2, tie majority count 2
    solutions = ["```\nadd 1\n```", "```\nadd 1\n```", "```\nadd 2\n```", "```\nadd 2\n```"]
    gateway = make_gateway(_assess_script(solutions))
    report, _ = assess(_problem(), gateway, fake_pool, t=4, m=4)
    assert report.valid
    assert report.delta == 0.5
    assert report.majority_counts == (2, 2, 2, 2)


def test_report_record_round_trip(make_gateway, fake_pool):
    gateway = make_gateway(_assess_script(["```\nadd 1\n```"] * 4))
    report, _ = assess(_problem(), gateway, fake_pool, t=4, m=4)
    assert DifficultyReport.from_record(report.to_record()) == report


def test_generated_problem_ids_stable_and_distinct():
    a = GeneratedProblem.create("pr", 0, "Statement one.")
    b = GeneratedProblem.create("pr", 0, "Statement one.")
    c = GeneratedProblem.create("pr", 1, "Statement one.")
    d = GeneratedProblem.create("pr", 0, "Statement two.")
    assert a == b
    assert len({a.problem_id, c.problem_id, d.problem_id}) == 3
    with pytest.raises(ValueError):
        GeneratedProblem.create("pr", 0, "   ")
