import json
from pathlib import Path

import pytest

from ragvv.mutator import generate_fixture_task

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def snippets() -> list[dict]:
    """The committed clean-snippet corpus (56 small programs)."""
    with (DATA_DIR / "snippets.jsonl").open("r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@pytest.fixture(scope="session")
def fixture_tasks(snippets):
    """8-variant inspection tasks generated from the snippet corpus,
    4 seeds per snippet (224 tasks)."""
    tasks = []
    for round_no in range(4):
        for rec in snippets:
            task = generate_fixture_task(
                rec["source"], f"{rec['task_id']}-r{round_no}", seed=round_no * 1009 + 17
            )
            assert task is not None, rec["task_id"]
            tasks.append(task)
    return tasks
