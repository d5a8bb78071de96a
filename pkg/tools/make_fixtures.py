#!/usr/bin/env python3
"""Regenerate the bundled fixtures deterministically.

Produces, under fixtures/:
- dump_slice.json.gz     synthetic 200-entity Wikidata-style dump slice
- dump_malformed.jsonl   3 good entity lines plus one truncated line
- relations.csv          relation/template subset matching the dump
- mock_backend.json      mock fill-mask fixture with corpus-wide vocabulary
- pipeline.yaml          offline pipeline config wiring the above together

The dump carries a handful of fixed storylines (club transfers and heads of
government whose answer sets change across quarters) plus seeded random
careers, and exercises every ingestion exclusion path. Rerunning this script
must reproduce every file byte for byte.
"""

from __future__ import annotations

import gzip
import json
import random
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
FIXTURES = REPO / "fixtures"
sys.path.insert(0, str(REPO / "src"))

from driftprobe.bridge import FixtureTokenizer, MockBackend  # noqa: E402
from driftprobe.ingest import IngestStats, ingest_dump, load_relations_csv  # noqa: E402

SEED = 20240712
ENTITY_TARGET = 200

RELATIONS_CSV = """\
property_id,relation_name,template_text
P54,member of sports team,<subject> plays for <object>.
P6,head of government,<object> is the head of the government of <subject>.
P69,educated at,<subject> attended <object>.
P102,political party,<subject> is a member of the <object>.
"""

# Storyline facts: (subject qid, property, object qid, start, end)
STORYLINES = [
    ("Q11571", "P54", "Q1422", "2018-07-10", "2021-08-26"),
    ("Q11571", "P54", "Q18656", "2021-08-27", "2022-11-22"),
    ("Q38", "P6", "Q3772470", "2018-06-01", "2021-02-13"),
    ("Q38", "P6", "Q3731", "2021-02-13", "2022-10-22"),
    ("Q145", "P6", "Q264766", "2016-07-13", "2019-07-24"),
    ("Q145", "P6", "Q180589", "2019-07-24", "2022-09-06"),
    ("Q231447", "P54", "Q19630614", "2015-12-01", None),
]

STORY_LABELS = {
    "Q11571": "Cristiano Ronaldo",
    "Q1422": "Juventus F.C.",
    "Q18656": "Manchester United F.C.",
    "Q38": "Italy",
    "Q3772470": "Giuseppe Conte",
    "Q3731": "Mario Draghi",
    "Q145": "United Kingdom",
    "Q264766": "Theresa May",
    "Q180589": "Boris Johnson",
    "Q231447": "Alex Morgan",
    "Q19630614": "Orlando Pride",
}

CLUBS = [
    "Riverton",
    "Baymont",
    "Northgate United",
    "Port Vale Athletic",
    "Eastfield",
    "Silverlake Rovers",
    "Harborview",
    "Stonebridge City",
    "Westmoor Wanderers",
    "Oakhurst",
    "Lakeside Albion",
    "Redcliffe",
    "Summerton Town",
    "Granite County",
    "Bluewater",
    "Kestrel Park Rangers",
]

SCHOOLS = [
    "Kingsbridge University",
    "Ashford College",
    "Merivale Institute",
    "Northquay University",
    "Saint Oswald Academy",
    "Hollowell University",
]

PARTIES = [
    "Unity Party",
    "Progress Alliance",
    "Civic Forum",
    "Meadowland Greens",
]

FIRST_NAMES = [
    "Ada", "Bruno", "Carla", "Dawit", "Elena", "Farid", "Greta", "Hugo",
    "Ines", "Jonas", "Keiko", "Lamine", "Mira", "Nadia", "Oscar", "Priya",
    "Quentin", "Rosa", "Samir", "Tessa", "Umar", "Vera", "Wilbur", "Ximena",
    "Yusuf", "Zofia",
]
LAST_NAMES = [
    "Albright", "Bakker", "Castellano", "Dubois", "Eriksen", "Fontaine",
    "Garrido", "Hedlund", "Ivanova", "Jansson", "Kimura", "Lindqvist",
    "Moreau", "Novak", "Okafor", "Petrov", "Quiroga", "Rossi", "Salonen",
    "Takacs",
]

# Extra vocabulary so hand-authored mock contexts can score tokens that never
# appear in the dump corpus.
EXTRA_VOCAB = ["Portland", "Washington", "Test", "Subject", "Alpha", "Beta", "Gamma", "Delta"]

MOCK_CONTEXTS = {
    "Alex Morgan plays for <mask>.": {"Orlando": 0.5, "Portland": 0.2, "Washington": 0.1},
    "Test Subject plays for <mask>.": {"Alpha": 0.4, "Beta": 0.3, "Gamma": 0.2, "Delta": 0.05},
    "Cristiano Ronaldo plays for <mask>.": {"Juventus": 0.45, "Manchester": 0.3},
    "<mask> <mask> is the head of the government of Italy.": {"Mario": 0.6, "Giuseppe": 0.3},
    "Mario <mask> is the head of the government of Italy.": {"Draghi": 0.1353352832366127},
    "<mask> Draghi is the head of the government of Italy.": {"Mario": 0.36787944117144233},
    "Giuseppe <mask> is the head of the government of Italy.": {"Conte": 0.36787944117144233},
    "<mask> Conte is the head of the government of Italy.": {"Giuseppe": 0.36787944117144233},
    "Giuseppe Conte is the head of the government of <mask>.": {"Italy": 1.0},
}

MOCK_FALLBACK = {".": 0.25, "the": 0.15, "of": 0.1}

PIPELINE_YAML = """\
# Offline benchmark run over the bundled synthetic fixtures.
relations: relations.csv
dump: dump_slice.json.gz

# Collection window and bucket granularity (month, quarter, or year).
range:
  from: 2019-01-01
  to: 2022-06-30
granularity: quarter

# Cap of ranked subjects kept per relation.
max_subjects: 1000

# Generation enumerates 1..N masks; answers longer than this leave the
# multi-token view (the scoring view keeps them).
max_answer_tokens: 5

top_k: 100
precision_ks: [1, 5, 10, 100]
views: [single, multi, pll]

decode:
  mode: greedy
  temperature: 1.0
  seed: 0
  top_n: 50

pll_scope: answer_span
report_window: 3
workers: 1

# Two labels over the same deterministic mock; quarterly names make the
# window report meaningful.
backends:
  - name: 2020-Q4
    endpoint: mock:mock_backend.json
  - name: 2021-Q2
    endpoint: mock:mock_backend.json
"""


def time_value(iso: str, precision: int = 11) -> dict:
    return {
        "time": f"+{iso}T00:00:00Z",
        "timezone": 0,
        "before": 0,
        "after": 0,
        "precision": precision,
        "calendarmodel": "http://www.wikidata.org/entity/Q1985727",
    }


def entity_value(qid: str) -> dict:
    return {
        "value": {"entity-type": "item", "numeric-id": int(qid[1:]), "id": qid},
        "type": "wikibase-entityid",
    }


def make_claim(
    prop: str,
    target_qid: str,
    start: str | None = None,
    end: str | None = None,
    rank: str = "normal",
    start_precision: int = 11,
    end_precision: int = 11,
    mainsnak_override: dict | None = None,
) -> dict:
    claim = {
        "mainsnak": {
            "snaktype": "value",
            "property": prop,
            "datavalue": mainsnak_override or entity_value(target_qid),
        },
        "type": "statement",
        "rank": rank,
    }
    qualifiers = {}
    if start:
        qualifiers["P580"] = [
            {
                "snaktype": "value",
                "property": "P580",
                "datavalue": {"value": time_value(start, start_precision), "type": "time"},
            }
        ]
    if end:
        qualifiers["P582"] = [
            {
                "snaktype": "value",
                "property": "P582",
                "datavalue": {"value": time_value(end, end_precision), "type": "time"},
            }
        ]
    if qualifiers:
        claim["qualifiers"] = qualifiers
    return claim


def make_entity(qid: str, label: str | None, sitelink: bool = True, claims: dict | None = None) -> dict:
    entity: dict = {"type": "item", "id": qid, "labels": {}, "claims": claims or {}, "sitelinks": {}}
    if label is not None:
        entity["labels"]["en"] = {"language": "en", "value": label}
    if sitelink:
        title = label if label is not None else qid
        entity["sitelinks"]["enwiki"] = {"site": "enwiki", "title": title}
    return entity


def random_date(rng: random.Random, year_lo: int, year_hi: int) -> str:
    year = rng.randint(year_lo, year_hi)
    month = rng.randint(1, 12)
    day = rng.randint(1, 28)
    return f"{year:04d}-{month:02d}-{day:02d}"


def add_days(iso: str, days: int) -> str:
    from datetime import date, timedelta

    return (date.fromisoformat(iso) + timedelta(days=days)).isoformat()


def build_entities() -> list[dict]:
    rng = random.Random(SEED)
    entities: list[dict] = []
    qid_counter = 9000

    def next_qid() -> str:
        nonlocal qid_counter
        qid_counter += 1
        return f"Q{qid_counter}"

    # Storyline object/subject entities.
    claims_by_subject: dict[str, dict[str, list]] = {}
    for subject, prop, obj, start, end in STORYLINES:
        claims_by_subject.setdefault(subject, {}).setdefault(prop, []).append(
            make_claim(prop, obj, start, end)
        )
    storyline_subjects = set(claims_by_subject)
    for qid, label in STORY_LABELS.items():
        entities.append(make_entity(qid, label, claims=claims_by_subject.get(qid)))

    # Object pools.
    club_qids, school_qids, party_qids = [], [], []
    for label in CLUBS:
        qid = next_qid()
        club_qids.append(qid)
        entities.append(make_entity(qid, label))
    for label in SCHOOLS:
        qid = next_qid()
        school_qids.append(qid)
        entities.append(make_entity(qid, label))
    for label in PARTIES:
        qid = next_qid()
        party_qids.append(qid)
        entities.append(make_entity(qid, label))

    # Edge-case entities exercising each exclusion path.
    no_sitelink_club = next_qid()
    entities.append(make_entity(no_sitelink_club, "Ghost Harbor", sitelink=False))
    no_label_club = next_qid()
    entities.append(make_entity(no_label_club, None, sitelink=True))
    unknown_club = "Q99999999"  # never defined in the dump

    edge_specs = [
        # claim without temporal qualifiers -> not_temporal
        ("Edda Nontemporal", {"P54": [make_claim("P54", club_qids[0])]}),
        # end before the 2010 cutoff -> before_cutoff
        ("Rex Retired", {"P54": [make_claim("P54", club_qids[1], None, "2009-05-01")]}),
        # deprecated rank -> deprecated_rank
        (
            "Dora Deprecated",
            {"P54": [make_claim("P54", club_qids[2], "2020-01-01", None, rank="deprecated")]},
        ),
        # object entity lacking a sitelink -> object_no_sitelink
        ("Sid Shadow", {"P54": [make_claim("P54", no_sitelink_club, "2020-02-01", None)]}),
        # object entity lacking a label -> object_no_label
        ("Lena Label", {"P54": [make_claim("P54", no_label_club, "2020-03-01", None)]}),
        # object never present in the dump -> object_unknown
        ("Uri Unknownclub", {"P54": [make_claim("P54", unknown_club, "2020-04-01", None)]}),
        # non-entity object value -> object_not_entity
        (
            "Nora Numeric",
            {
                "P54": [
                    make_claim(
                        "P54",
                        club_qids[3],
                        "2020-05-01",
                        None,
                        mainsnak_override={"value": "free text", "type": "string"},
                    )
                ]
            },
        ),
        # year-precision start snaps to January 1
        ("Yuri Yearprec", {"P54": [make_claim("P54", club_qids[4], "2021-00-00", None, start_precision=9)]}),
    ]
    for label, claims in edge_specs:
        entities.append(make_entity(next_qid(), label, claims=claims))
    # subject without a sitelink -> subject_no_sitelink
    entities.append(
        make_entity(
            next_qid(),
            "Nils Nolink",
            sitelink=False,
            claims={"P54": [make_claim("P54", club_qids[5], "2020-06-01", None)]},
        )
    )

    # Seeded random careers. Names pair first x last deterministically.
    names = [f"{f} {l}" for f in FIRST_NAMES for l in LAST_NAMES]
    rng.shuffle(names)
    filler_needed = ENTITY_TARGET - len(entities)
    players = filler_needed
    for i in range(players):
        label = names[i]
        claims: dict[str, list] = {}
        stints = rng.randint(1, 3)
        cursor = random_date(rng, 2017, 2021)
        p54 = []
        for _ in range(stints):
            club = rng.choice(club_qids)
            duration = rng.randint(180, 900)
            end = add_days(cursor, duration)
            open_ended = rng.random() < 0.25
            p54.append(make_claim("P54", club, cursor, None if open_ended else end))
            if open_ended:
                break
            cursor = add_days(end, 1)
        claims["P54"] = p54
        if rng.random() < 0.35:
            school = rng.choice(school_qids)
            start = random_date(rng, 2008, 2016)
            claims["P69"] = [make_claim("P69", school, start, add_days(start, 365 * 3))]
        if rng.random() < 0.25:
            party = rng.choice(party_qids)
            claims["P102"] = [make_claim("P102", party, random_date(rng, 2015, 2021), None)]
        entities.append(make_entity(next_qid(), label, claims=claims))

    assert len(entities) == ENTITY_TARGET, f"expected {ENTITY_TARGET} entities, built {len(entities)}"
    assert storyline_subjects <= {e["id"] for e in entities}
    return entities


def write_dump(entities: list[dict], path: Path) -> None:
    lines = ["[\n"]
    for i, entity in enumerate(entities):
        suffix = ",\n" if i < len(entities) - 1 else "\n"
        lines.append(json.dumps(entity, sort_keys=True, ensure_ascii=False) + suffix)
    lines.append("]\n")
    data = "".join(lines).encode("utf-8")
    # Fixed mtime and no filename keep the gzip bytes reproducible.
    with open(path, "wb") as handle:
        with gzip.GzipFile(fileobj=handle, mode="wb", mtime=0) as gz:
            gz.write(data)


def write_malformed(entities: list[dict], path: Path) -> None:
    lines = [json.dumps(e, sort_keys=True, ensure_ascii=False) for e in entities[:3]]
    truncated = json.dumps(entities[3], sort_keys=True)[:40]
    content = "\n".join(lines[:2] + [truncated] + lines[2:]) + "\n"
    path.write_text(content, encoding="utf-8")


def build_vocab(entities: list[dict], relations_csv: Path) -> list[str]:
    tokenizer = FixtureTokenizer(["<mask>"])
    words: set[str] = {"<mask>"}
    relations = load_relations_csv(relations_csv)
    for config in relations.values():
        stripped = config.template_text.replace("<subject>", " ").replace("<object>", " ")
        words.update(tokenizer.token_strings(stripped))
    for entity in entities:
        label = (entity.get("labels", {}).get("en") or {}).get("value")
        if label:
            words.update(tokenizer.token_strings(label))
    words.update(EXTRA_VOCAB)
    vocab = sorted(words)
    # Keep the mask token at a stable, documented position: index 0.
    vocab.remove("<mask>")
    return ["<mask>"] + vocab


def write_mock_backend(vocab: list[str], path: Path) -> None:
    fixture = {
        "header": {"name": "mock", "vocab": vocab, "mask_token_id": 0},
        "contexts": MOCK_CONTEXTS,
        "fallback_unigram": MOCK_FALLBACK,
    }
    path.write_text(json.dumps(fixture, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_golden(fixtures: Path, schema_dir: Path) -> None:
    """Capture golden request/response vectors from the hand-authored mock."""
    from driftprobe.bridge import BridgeClient, FillMaskRequest

    client = BridgeClient(f"mock:{fixtures / 'mock_probe.json'}")
    golden_dir = schema_dir / "golden"
    golden_dir.mkdir(parents=True, exist_ok=True)

    def dump(name: str, payload: dict) -> None:
        (golden_dir / name).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    dump("info.json", {"endpoint": "GET /info", "response": client._mock.info()})
    text = "Alex Morgan plays for <mask>."
    ids = client.tokenize(text)
    dump(
        "tokenize.json",
        {
            "endpoint": "POST /tokenize",
            "request": {"text": "Orlando Pride", "add_prefix_space": True},
            "response": {"token_ids": client.tokenize("Orlando Pride", add_prefix_space=True)},
        },
    )
    dump(
        "detokenize.json",
        {
            "endpoint": "POST /detokenize",
            "request": {"token_ids": ids},
            "response": {"text": client.detokenize(ids)},
        },
    )
    req = FillMaskRequest(text=text, top_n=3, query_token_ids=(13,))
    masks = client.fill_mask(req)
    dump(
        "fill_mask.json",
        {
            "endpoint": "POST /fill_mask",
            "request": {
                "text": req.text,
                "top_n": req.top_n,
                "query_token_ids": list(req.query_token_ids),
            },
            "response": BridgeClient._encode_masks(masks),
        },
    )
    two_mask = "<mask> <mask> is the head of the government of Italy."
    req2 = FillMaskRequest(text=two_mask, top_n=2)
    dump(
        "fill_mask_two_masks.json",
        {
            "endpoint": "POST /fill_mask",
            "request": {"text": req2.text, "top_n": req2.top_n, "query_token_ids": []},
            "response": BridgeClient._encode_masks(client.fill_mask(req2)),
        },
    )


def verify(fixtures: Path) -> None:
    """Re-ingest the generated dump and check the frozen storyline facts."""
    relations = load_relations_csv(fixtures / "relations.csv")
    stats = IngestStats()
    facts = ingest_dump(fixtures / "dump_slice.json.gz", relations, stats)
    assert stats.entities == ENTITY_TARGET, stats.entities
    assert stats.malformed_lines == 0
    assert stats.consistent(), (stats.claims_seen, stats.emitted, dict(stats.exclusions))
    for reason in (
        "not_temporal",
        "before_cutoff",
        "deprecated_rank",
        "object_no_sitelink",
        "object_no_label",
        "object_unknown",
        "object_not_entity",
        "subject_no_sitelink",
    ):
        assert stats.exclusions[reason] >= 1, f"missing exclusion fixture for {reason}"

    mock = MockBackend(fixtures / "mock_backend.json")
    for fact in facts:
        mock.tokenize(fact.subject_label)
        mock.tokenize(fact.object_label)
    for config in relations.values():
        mock.tokenize(config.template_text.replace("<subject>", " ").replace("<object>", "<mask>"))
    assert stats.exclusions["object_unknown"] == 1
    print(f"verified: {len(facts)} facts, exclusions {dict(sorted(stats.exclusions.items()))}")


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    entities = build_entities()
    (FIXTURES / "relations.csv").write_text(RELATIONS_CSV, encoding="utf-8")
    write_dump(entities, FIXTURES / "dump_slice.json.gz")
    write_malformed(entities, FIXTURES / "dump_malformed.jsonl")
    vocab = build_vocab(entities, FIXTURES / "relations.csv")
    write_mock_backend(vocab, FIXTURES / "mock_backend.json")
    (FIXTURES / "pipeline.yaml").write_text(PIPELINE_YAML, encoding="utf-8")
    write_golden(FIXTURES, REPO / "schema")
    verify(FIXTURES)
    print(f"fixtures written to {FIXTURES} (vocab size {len(vocab)})")


if __name__ == "__main__":
    main()
