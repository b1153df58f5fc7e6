from pathlib import Path

import pytest

WORKED_SENTENCE = "Given her fever the patient was treated with Ceptaz and Levaquin ."
WORKED_CONCEPTS = [
    'c="fever" 1:2 1:2||t="problem"',
    'c="ceptaz" 1:8 1:8||t="treatment"',
    'c="levaquin" 1:10 1:10||t="treatment"',
]
WORKED_RELATIONS = [
    'c="ceptaz" 1:8 1:8||r="TrAP"||c="fever" 1:2 1:2',
    'c="levaquin" 1:10 1:10||r="TrAP"||c="fever" 1:2 1:2',
]


def write_doc(directory: Path, doc_id: str, lines, concepts=None, relations=None, tags=None):
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{doc_id}.txt").write_text("".join(f"{l}\n" for l in lines))
    if concepts is not None:
        (directory / f"{doc_id}.con").write_text("".join(f"{c}\n" for c in concepts))
    if relations is not None:
        (directory / f"{doc_id}.rel").write_text("".join(f"{r}\n" for r in relations))
    if tags is not None:
        (directory / f"{doc_id}.tags").write_text(tags)
    return directory


@pytest.fixture
def worked_dir(tmp_path):
    return write_doc(tmp_path / "worked", "doc1", [WORKED_SENTENCE], WORKED_CONCEPTS, WORKED_RELATIONS)


@pytest.fixture
def small_dir(tmp_path):
    """1 document, 2 sentences, 3 concepts, 1 relation."""
    return write_doc(
        tmp_path / "small",
        "rec1",
        ["His coumadin was held given his acute bleed .", "", "She did have some pain ."],
        [
            'c="his coumadin" 1:0 1:1||t="treatment"',
            'c="his acute bleed" 1:5 1:7||t="problem"',
            'c="some pain" 3:3 3:4||t="problem"',
        ],
        ['c="his coumadin" 1:0 1:1||r="TrNAP"||c="his acute bleed" 1:5 1:7'],
    )


FIXTURE_CORPUS = Path(__file__).parent / "fixtures" / "corpus"


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid or (outcome == "passed" and rep.when != "call"):
                continue
            name = nodeid.split("::")[-1]
            if not name.startswith("test_ac"):
                continue
            num, _, title = name[len("test_ac"):].partition("_")
            rows.append((int(num), title.replace("_", " "), "PASS" if outcome == "passed" else "FAIL"))
    if rows:
        terminalreporter.section("acceptance criteria")
        for num, title, status in sorted(set(rows)):
            terminalreporter.write_line(f"AC{num} {title}: {status}")
