from problemforge.concepts import ConceptKind
from problemforge.corpus import Corpus, CorpusManifest, Problem
from problemforge.extraction import extract_concepts, extract_corpus

GOOD = "Topics:\n- graphs\nKnowledge points:\n- bfs\n- queues\n"
TOPICLESS = "Topics:\nKnowledge points:\n- bfs\n"


def problem(pid="p1", statement="Find the shortest path."):
    return Problem(id=pid, statement=statement)


def test_extract_parses_first_good_response(make_gateway):
    gateway = make_gateway({"defaults": {"concept_extract": GOOD}})
    outcome = extract_concepts(problem(), gateway)
    assert outcome.error is None
    assert [c.name for c in outcome.concepts.topics] == ["graphs"]
    assert [c.name for c in outcome.concepts.knowledge_points] == ["bfs", "queues"]
    assert outcome.raw_response == GOOD


def test_extract_prompt_carries_statement(make_gateway):
    gateway = make_gateway(
        {"rules": [{"role": "concept_extract", "contains": "shortest path", "response": GOOD}]}
    )
    assert extract_concepts(problem(), gateway).concepts is not None


def test_extract_retries_past_unparseable_responses(make_gateway):
    responses = ["no sections at all", TOPICLESS, GOOD]
    gateway = make_gateway({"rules": [{"role": "concept_extract", "responses": responses}]})
    outcome = extract_concepts(problem(), gateway)
    assert outcome.error is None
    assert outcome.concepts.topics[0].name == "graphs"


def test_extract_gives_up_after_retries(make_gateway, caplog):
    gateway = make_gateway({"defaults": {"concept_extract": "still not a list"}})
    with caplog.at_level("WARNING"):
        outcome = extract_concepts(problem(), gateway, retries=2)
    assert outcome.concepts is None
    assert outcome.error is not None
    assert "extraction failed" in caplog.text
    record = outcome.to_record()
    assert record["error"] == outcome.error
    assert "topics" not in record


def test_extract_topicless_counts_as_failure(make_gateway):
    gateway = make_gateway({"defaults": {"concept_extract": TOPICLESS}})
    outcome = extract_concepts(problem(), gateway, retries=1)
    assert outcome.concepts is None
    assert outcome.error == "no topics in parsed response"


def test_extract_corpus_merges_in_problem_order(make_gateway, caplog):
    corpus = Corpus(
        problems=(
            problem("p1", "About trees."),
            problem("p2", "Unparseable one."),
            problem("p3", "About graphs."),
        ),
        manifest=CorpusManifest(
            source="test", schema="problems-jsonl-v1", sha256="0" * 64,
            problem_count=3, duplicates_dropped=0,
        ),
    )
    gateway = make_gateway(
        {
            "rules": [
                {"role": "concept_extract", "contains": "Unparseable", "response": "garbage"},
            ],
            "defaults": {"concept_extract": GOOD},
        }
    )
    with caplog.at_level("WARNING"):
        extracted, outcomes = extract_corpus(corpus, gateway)
    assert [o.problem_id for o in outcomes] == ["p1", "p2", "p3"]
    assert "1/3 problems failed" in caplog.text
    assert extracted.get("p1").concepts is not None
    assert extracted.get("p2").concepts is None
    assert extracted.get("p3").concepts.topics[0].kind is ConceptKind.TOPIC


def test_extract_outcome_record_round_trips_concepts(make_gateway):
    gateway = make_gateway({"defaults": {"concept_extract": GOOD}})
    record = extract_concepts(problem(), gateway).to_record()
    assert record["topics"] == ["graphs"]
    assert record["knowledge_points"] == ["bfs", "queues"]
    assert record["problem_id"] == "p1"
