import json
import shutil
import subprocess

import pytest

from problemforge.executor import (
    ExecutionMatrix,
    ExecutorError,
    RunnerPool,
    execute_matrix,
    extract_code,
    fake_runner_command,
)


def test_extract_single_fenced_block():
    assert extract_code("Here:\n```python\nprint(1)\n```\nDone.") == "print(1)"


def test_extract_last_of_two_blocks():
    text = "```\nfirst\n```\nthen\n```py\nsecond\n```"
    assert extract_code(text) == "second"


def test_extract_prose_only_absent():
    assert extract_code("I cannot solve this problem, sorry.") is None
    assert extract_code("") is None


def test_extract_bare_code_accepted_if_it_compiles():
    assert extract_code("x = 1\nprint(x)") == "x = 1\nprint(x)"


def test_extract_empty_fenced_block_absent():
    assert extract_code("```\n\n```") is None


def run_fake(program, input_text="", time_limit=2.0):
    request = json.dumps(
        {
            "program_source": program,
            "input_text": input_text,
            "time_limit_sec": time_limit,
            "memory_limit_bytes": 1 << 29,
        }
    )
    proc = subprocess.run(
        fake_runner_command(), input=request, capture_output=True, text=True, timeout=30
    )
    return proc


def test_fake_runner_protocol_shape():
    proc = run_fake("echo", "5\n")
    assert proc.returncode == 0
    result = json.loads(proc.stdout)
    assert result == {
        "status": "ok",
        "stderr_excerpt": "",
        "stdout_normalized": "5",
        "wall_time_sec": 0.0,
    }


@pytest.mark.parametrize(
    "program,input_text,expected",
    [
        ("echo", "7 \n\n", "7"),
        ("const\nanswer 42", "", "answer 42"),
        ("add 3", "10", "13"),
        ("sum", "1 2 3\n4", "10"),
        ('map {"a": "1", "b": "2"}', "b\n", "2"),
    ],
)
def test_fake_runner_ok_programs(program, input_text, expected):
    result = json.loads(run_fake(program, input_text).stdout)
    assert result["status"] == "ok"
    assert result["stdout_normalized"] == expected


@pytest.mark.parametrize(
    "program,status",
    [
        ("fail", "runtime_error"),
        ("silent", "no_output"),
        ("hang", "timeout"),
        ("membomb", "memory_exceeded"),
        ("add x", "runtime_error"),
        ('map {"a": "1"}', "runtime_error"),
        ("mystery-op", "runtime_error"),
    ],
)
def test_fake_runner_failure_statuses(program, status):
    result = json.loads(run_fake(program, "zzz").stdout)
    assert result["status"] == status
    assert result["stdout_normalized"] is None


def test_fake_runner_crash_exits_nonzero():
    proc = run_fake("crash")
    assert proc.returncode != 0
    assert proc.stdout == ""
    assert "internal fault" in proc.stderr


def test_pool_runs_and_caches(fake_pool, monkeypatch):
    spawns = []
    original = fake_pool._spawn

    def counting(program, input_text):
        spawns.append(program)
        return original(program, input_text)

    monkeypatch.setattr(fake_pool, "_spawn", counting)
    assert fake_pool.run_cell("add 1", "5") == "6"
    assert fake_pool.run_cell("add 1", "5") == "6"
    assert len(spawns) == 1


def test_pool_contains_failures_as_none(fake_pool):
    assert fake_pool.run_cell("fail", "x") is None
    assert fake_pool.run_cell("crash", "x") is None
    assert fake_pool.run_cell("hang", "x") is None


def test_pool_rejects_missing_runner():
    with pytest.raises(ExecutorError, match="not found"):
        RunnerPool(command=["definitely-not-a-real-runner-binary"])


def test_matrix_validation():
    with pytest.raises(ValueError):
        ExecutionMatrix(problem_id="p", inputs=("1",), programs=("echo",), outputs=())
    with pytest.raises(ValueError):
        ExecutionMatrix(problem_id="p", inputs=("1", "2"), programs=("echo",), outputs=(("1",),))


def test_execute_matrix_identical_programs_give_equal_rows(fake_pool):
    matrix = execute_matrix("p", ["add 2", "add 2"], ["1", "2", "3"], fake_pool)
    assert matrix.outputs[0] == matrix.outputs[1] == ("3", "4", "5")


def test_execute_matrix_failing_solution_row_absent(fake_pool):
    matrix = execute_matrix("p", ["hang", "echo"], ["1", "2"], fake_pool)
    assert matrix.outputs[0] == (None, None)
    assert matrix.outputs[1] == ("1", "2")


def test_execute_matrix_none_program_rows_skip_execution(fake_pool):
    matrix = execute_matrix("p", [None, "echo"], ["9"], fake_pool)
    assert matrix.outputs[0] == (None,)
    assert matrix.outputs[1] == ("9",)


def test_execute_matrix_cell_alignment(fake_pool):
    # distinct program x input pairs land in their own cells
    matrix = execute_matrix("p", ["add 10", "add 20"], ["1", "2"], fake_pool)
    assert matrix.outputs == (("11", "12"), ("21", "22"))
    assert matrix.column(1) == ("12", "22")


def test_execute_matrix_requires_nonempty_axes(fake_pool):
    with pytest.raises(ValueError):
        execute_matrix("p", [], ["1"], fake_pool)
    with pytest.raises(ValueError):
        execute_matrix("p", ["echo"], [], fake_pool)


def test_scheduling_independence():
    serial = RunnerPool(command=fake_runner_command(), pool_size=1, time_limit_sec=2.0)
    parallel = RunnerPool(command=fake_runner_command(), pool_size=4, time_limit_sec=2.0)
    programs = ["add 1", "add 2", "fail", "echo"]
    inputs = ["1", "2", "3"]
    a = execute_matrix("p", programs, inputs, serial)
    b = execute_matrix("p", programs, inputs, parallel)
    assert a == b


def test_pool_bound_respected(fake_pool):
    programs = [f"add {i}" for i in range(6)]
    execute_matrix("p", programs, ["1", "2", "3"], fake_pool)
    assert 1 <= fake_pool.max_running_seen <= fake_pool.pool_size


def test_matrix_record_round_trip(fake_pool):
    matrix = execute_matrix("p", ["echo", "fail"], ["1"], fake_pool)
    assert ExecutionMatrix.from_record(matrix.to_record()) == matrix


@pytest.mark.skipif(
    shutil.which("sandbox-runner") is None, reason="sandbox-runner not installed"
)
def test_real_sandbox_runner_interoperates():
    # Same protocol, different producer: real Python programs this time.
    pool = RunnerPool(command=["sandbox-runner"], pool_size=4, time_limit_sec=2.0)
    programs = [
        "import sys\nsys.stdout.write(sys.stdin.read())",
        "print(int(input()) + 1)",
        "while True:\n    pass",
        None,
    ]
    matrix = execute_matrix("interop", programs, ["3\n", "4\n"], pool)
    assert matrix.outputs == (("3", "4"), ("4", "5"), (None, None), (None, None))
