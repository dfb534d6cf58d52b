import json

import pytest


@pytest.fixture
def write_jsonl(tmp_path):
    """Write rows as a JSONL file under tmp_path; returns the path."""
    def write(name, rows):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                if isinstance(row, str):
                    fh.write(row + "\n")
                else:
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        return path
    return write
