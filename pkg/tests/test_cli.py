import json
import os

import pytest

from privkg.cli import main
from privkg.graph import from_named_triples, write_triples
from .conftest import TOY_SCHEMA, TOY_TRIPLES


def _write_toy(tmp_path):
    g = from_named_triples(TOY_TRIPLES, TOY_SCHEMA)
    graph_path = tmp_path / "graph.tsv"
    schema_path = tmp_path / "schema.tsv"
    write_triples(graph_path, g, g.triples)
    with open(schema_path, "w") as f:
        for name, kind in sorted(TOY_SCHEMA.items()):
            f.write("%s\t%s\n" % (name, kind))
    return str(graph_path), str(schema_path)


def _write_synthetic(tmp_path):
    from privkg.synthetic import make_synthetic_kg
    g = make_synthetic_kg(n_entities=48, n_communities=4, n_relations=3,
                          n_attributes=2, seed=5)
    graph_path = tmp_path / "graph.tsv"
    schema_path = tmp_path / "schema.tsv"
    write_triples(graph_path, g, g.triples)
    with open(schema_path, "w") as f:
        for r in g.relations:
            f.write("%s\t%s\n" % (r.name, r.kind))
    return str(graph_path), str(schema_path)


def test_ingest_writes_stats_and_manifest(tmp_path):
    graph, schema = _write_toy(tmp_path)
    out = str(tmp_path / "out")
    assert main(["ingest", "--graph", graph, "--schema", schema, "--out", out]) == 0
    stats = json.loads((tmp_path / "out" / "graph-stats.json").read_text())
    assert stats["triples"] == len(TOY_TRIPLES)
    assert stats["vertices"] == 8
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["command"] == "ingest"
    assert set(manifest["inputs"]) == {"graph.tsv", "schema.tsv"}
    assert all(len(d) == 64 for d in manifest["inputs"].values())


def test_audit_reports_private_tag(tmp_path, capsys):
    graph, schema = _write_toy(tmp_path)
    private = tmp_path / "private.tsv"
    private.write_text("Hinton\tLiveIn\tToronto\n")
    rc = main(["audit", "--graph", graph, "--schema", schema,
               "--private", str(private),
               "--query", "(p LiveIn (u (a Hinton) (a LeCun)))"])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["NYC\tpublic", "Toronto\tprivate"]


def test_audit_strict_mode_flag(tmp_path, capsys):
    graph, schema = _write_toy(tmp_path)
    rc = main(["audit", "--graph", graph, "--schema", schema,
               "--query", "(p WinAward (a Hinton))", "--mode", "strict"])
    assert rc == 0
    assert capsys.readouterr().out == "Turing\tpublic\n"


def test_missing_required_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["privatize", "--graph", "x.tsv"])
    assert e.value.code == 2


def test_bad_input_returns_1(tmp_path, capsys):
    rc = main(["ingest", "--graph", str(tmp_path / "missing.tsv"),
               "--schema", str(tmp_path / "missing2.tsv"),
               "--out", str(tmp_path / "out")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_split_outputs_deterministic(tmp_path):
    graph, schema = _write_synthetic(tmp_path)
    priv_out = str(tmp_path / "priv")
    assert main(["privatize", "--graph", graph, "--schema", schema,
                 "--n-private", "4", "--seed", "3", "--out", priv_out]) == 0
    private = os.path.join(priv_out, "private.tsv")
    blobs = []
    for name in ("s1", "s2"):
        out = str(tmp_path / name)
        assert main(["split", "--graph", graph, "--schema", schema,
                     "--private", private, "--seed", "9", "--out", out]) == 0
        blobs.append(b"".join((tmp_path / name / f).read_bytes()
                              for f in ("train.tsv", "valid.tsv", "test.tsv")))
    assert blobs[0] == blobs[1]


def test_full_pipeline(tmp_path, capsys):
    graph, schema = _write_synthetic(tmp_path)
    priv_out = str(tmp_path / "priv")
    main(["privatize", "--graph", graph, "--schema", schema,
          "--n-private", "4", "--seed", "1", "--out", priv_out])
    private = os.path.join(priv_out, "private.tsv")

    bench = str(tmp_path / "bench")
    assert main(["sample-queries", "--graph", graph, "--schema", schema,
                 "--private", private, "--qtype", "1p", "--n", "12",
                 "--seed", "2", "--out", bench]) == 0
    assert (tmp_path / "bench" / "queries-1p.tsv").exists()
    assert (tmp_path / "bench" / "stats.tsv").read_text().startswith("Answers\t")

    run = str(tmp_path / "run")
    assert main(["train", "--graph", graph, "--schema", schema,
                 "--private", private, "--benchmark", bench,
                 "--model", "gqe", "--dim", "8", "--epochs", "2",
                 "--lr", "0.02", "--beta", "0.1", "--seed", "4",
                 "--out", run]) == 0
    assert (tmp_path / "run" / "model.ckpt").exists()
    trace = (tmp_path / "run" / "trace.csv").read_text().splitlines()
    assert trace[0] == "epoch,L_u,L_p,L" and len(trace) == 3

    ev = str(tmp_path / "eval")
    assert main(["eval", "--graph", graph, "--schema", schema,
                 "--private", private, "--benchmark", bench,
                 "--checkpoint", os.path.join(run, "model.ckpt"),
                 "--seed", "4", "--out", ev]) == 0
    report = (tmp_path / "eval" / "report.tsv").read_text()
    assert report.startswith("type\tclass\tHR@1")

    merged = str(tmp_path / "merged")
    assert main(["report", "--eval-report", os.path.join(ev, "report.tsv"),
                 "--baseline", os.path.join(ev, "report.tsv"),
                 "--out", merged]) == 0
    body = (tmp_path / "merged" / "report-merged.tsv").read_text()
    assert "MRR_vs_baseline" in body.splitlines()[0]
    assert "100.0%" in body


def test_eval_noise_requires_sigma(tmp_path):
    graph, schema = _write_toy(tmp_path)
    with pytest.raises(SystemExit):
        main(["eval", "--graph", graph, "--schema", schema,
              "--private", str(tmp_path / "nope.tsv"), "--benchmark", ".",
              "--checkpoint", "x", "--protection", "noise",
              "--seed", "0", "--out", str(tmp_path / "o")])
