"""Dataset handling, CSV round trips, simulation, and the command line."""

import json

import numpy as np
import pytest

from admgfit.cli import main
from admgfit.data import Dataset, counts_for, load_data, save_data, simulate
from admgfit.fitting import FitOptions, fit
from admgfit.graph import Admg, format_graph
from admgfit.moebius import prob_vector

from util import graph_one, graph_two, random_interior_q, strong_params_graph_one


# ---------------------------------------------------------------------------
# datasets


def test_from_rows_aggregates_in_first_seen_order():
    ds = Dataset.from_rows(
        ["a", "b"], [(1, 0), (0, 0), (1, 0), (1, 1), (0, 0), (1, 0)]
    )
    assert ds.names == ("a", "b")
    assert [tuple(r) for r in ds.states] == [(1, 0), (0, 0), (1, 1)]
    assert list(ds.counts) == [3, 2, 1]
    assert ds.n == 6


def test_count_vector_is_big_endian_and_reorderable():
    ds = Dataset.from_rows(["a", "b"], [(1, 0), (0, 0), (1, 0), (0, 1)])
    assert list(ds.count_vector()) == [1, 1, 2, 0]  # 00, 01, 10, 11
    assert list(ds.count_vector(["b", "a"])) == [1, 2, 1, 0]
    with pytest.raises(ValueError, match="do not match dataset columns"):
        ds.count_vector(["a", "c"])
    g = Admg(["b", "a"])
    assert list(counts_for(g, ds)) == [1, 2, 1, 0]


def test_csv_round_trip(tmp_path):
    ds = Dataset.from_rows(["x", "y", "z"], [(0, 1, 1), (1, 1, 0), (0, 1, 1)])
    path = tmp_path / "data.csv"
    save_data(ds, path)
    back = load_data(path)
    assert back.names == ds.names
    assert back.n == ds.n
    assert np.array_equal(
        back.count_vector(ds.names), ds.count_vector()
    )


def test_load_data_without_count_column(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("a,b\n0,1\n0,1\n1,0\n\n")
    ds = load_data(path)
    assert ds.names == ("a", "b")
    assert list(ds.count_vector()) == [0, 2, 1, 0]


def test_load_data_aggregates_repeated_states(tmp_path):
    path = tmp_path / "dups.csv"
    path.write_text("a,b,count\n0,1,3\n0,1,2\n1,1,1\n")
    ds = load_data(path)
    assert list(ds.count_vector()) == [0, 5, 0, 1]


def test_load_data_error_messages(tmp_path):
    cases = [
        ("", "empty file"),
        ("count\n3\n", "no variable columns"),
        ("a,a,count\n0,1,2\n", "duplicate column names"),
        ("a,b\n0\n", "expected 2 fields"),
        ("a,b\n0,x\n", "non-integer value"),
        ("a,b,count\n0,1,-2\n", "negative count"),
        ("a,b\n0,2\n", "values must be 0 or 1"),
    ]
    for text, message in cases:
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(ValueError, match=message):
            load_data(path)


def test_simulate_is_seeded_and_counts_sum_to_n():
    g = graph_one()
    q = strong_params_graph_one()
    a = simulate(g, q, 500, seed=9)
    b = simulate(g, q, 500, seed=9)
    c = simulate(g, q, 500, seed=10)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.counts, b.counts)
    assert a.n == 500
    assert a.counts.min() > 0  # only realized states are stored
    assert not np.array_equal(
        a.count_vector(a.names), c.count_vector(c.names)
    )


def test_simulate_frequencies_approach_the_model(tmp_path):
    g = graph_two()
    rng = np.random.default_rng(50)
    q = random_interior_q(g, rng)
    p = prob_vector(g, q)
    ds = simulate(g, q, 200000, seed=1)
    freq = counts_for(g, ds) / ds.n
    assert np.max(np.abs(freq - p)) < 0.01


def test_simulate_rejects_bad_inputs():
    g = graph_two()
    q = random_interior_q(g, np.random.default_rng(0))
    with pytest.raises(ValueError, match="n must be positive"):
        simulate(g, q, 0)
    bad = np.full(7, 0.9)
    assert prob_vector(g, bad).min() < -1e-9
    with pytest.raises(ValueError, match="outside the model"):
        simulate(g, bad, 10)


# ---------------------------------------------------------------------------
# command line


@pytest.fixture
def workdir(tmp_path):
    """A graph file and matching simulated data for CLI runs."""
    g = graph_one()
    gpath = tmp_path / "graph.txt"
    gpath.write_text(format_graph(g))
    ds = simulate(g, strong_params_graph_one(), 2000, seed=5)
    dpath = tmp_path / "data.csv"
    save_data(ds, dpath)
    return tmp_path, str(gpath), str(dpath)


def test_cli_info_lists_heads_and_tails(capsys):
    g = graph_one()
    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "g.txt")
        with open(path, "w") as fh:
            fh.write(format_graph(g))
        assert main(["info", path]) == 0
    out = capsys.readouterr().out
    assert "vertices: 1 2 3 4" in out
    assert "directed edges: 1 -> 2, 2 -> 4" in out
    assert "districts: {1} {2,3,4}" in out
    assert "  {2,3} | {1}" in out
    assert "  {3,4} | {1,2}" in out
    assert "parameters: 12" in out


def test_cli_info_matrices_smoke(tmp_path, capsys):
    gpath = tmp_path / "g.txt"
    gpath.write_text("vertices: 1 2\n1 <-> 2\n")
    assert main(["info", str(gpath), "--matrices"]) == 0
    out = capsys.readouterr().out
    assert "M =" in out and "P =" in out and "terms:" in out


def test_cli_fit_text_and_json(workdir, capsys):
    tmp_path, gpath, dpath = workdir
    jpath = tmp_path / "report.json"
    code = main(["fit", gpath, dpath, "--json", str(jpath), "--seed", "3"])
    out = capsys.readouterr().out
    assert code == 0
    assert "graph: 4 vertices, 2 directed, 2 bidirected" in out
    assert "districts: {1} {2,3,4}" in out
    assert "backend:" in out
    assert "parameter" in out and "estimate" in out and "std.error" in out
    assert "loglik:" in out and "bic:" in out
    assert "converged: yes" in out
    payload = json.loads(jpath.read_text())
    assert payload["schema_version"] == 1
    assert len(payload["parameters"]) == 12
    assert payload["converged"] is True
    assert payload["deviance"] >= 0


def test_cli_fit_honors_backend_and_parallel_flags(workdir, capsys):
    _, gpath, dpath = workdir
    code = main(["fit", gpath, dpath, "--backend", "numpy", "--parallel-districts"])
    out = capsys.readouterr().out
    assert code == 0
    assert "backend: numpy" in out


def test_cli_fit_exit_three_when_not_converged(workdir, capsys):
    _, gpath, dpath = workdir
    code = main(["fit", gpath, dpath, "--max-cycles", "1", "--tol", "1e-14"])
    captured = capsys.readouterr()
    assert code == 3
    assert "converged: no" in captured.out
    assert "did not converge" in captured.err


def test_cli_fit_json_to_stdout(workdir, capsys):
    _, gpath, dpath = workdir
    assert main(["fit", gpath, dpath, "--no-se", "--json", "-"]) == 0
    out = capsys.readouterr().out
    start = out.index("\n{\n") + 1
    payload = json.loads(out[start:])
    assert payload["parameters"][0]["std_error"] is None


def test_cli_msep_statements(workdir, capsys):
    _, gpath, _ = workdir
    assert main(["msep", gpath, "1", "3"]) == 0
    assert main(["msep", gpath, "1", "3", "--given", "2", "--walk"]) == 0
    out = capsys.readouterr().out
    assert "{1} and {3} are m-separated given {}" in out
    assert "{1} and {3} are m-connected given {2}" in out
    assert "walk:" in out


def test_cli_select_transcript(workdir, capsys):
    tmp_path, _, dpath = workdir
    jpath = tmp_path / "steps.json"
    code = main(["select", dpath, "--json", str(jpath), "--max-cycles", "2000"])
    out = capsys.readouterr().out
    assert code == 0
    assert "start: bic=" in out
    assert "step 1: add" in out
    assert "evaluated" in out and "candidate fits" in out
    assert "final graph:" in out
    payload = json.loads(jpath.read_text())
    assert payload["criterion"] == "bic"
    assert payload["steps"]
    assert payload["steps"][0]["action"] == "add"
    assert payload["final"]["schema_version"] == 1
    assert payload["start_value"] > payload["value"]


def test_cli_select_rejects_mismatched_start(workdir, tmp_path, capsys):
    _, _, dpath = workdir
    other = tmp_path / "other.txt"
    other.write_text("vertices: a b\na -> b\n")
    code = main(["select", dpath, "--start", str(other)])
    assert code == 2
    assert "do not match data columns" in capsys.readouterr().err


def test_cli_simulate_stdout_and_file(tmp_path, capsys):
    gpath = tmp_path / "g.txt"
    gpath.write_text(format_graph(graph_two()))
    assert main(["simulate", str(gpath), "300", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    header, *rows = [ln for ln in out.splitlines() if ln]
    assert header == "1,2,3,count"
    assert sum(int(r.split(",")[-1]) for r in rows) == 300

    opath = tmp_path / "sim.csv"
    assert main(
        ["simulate", str(gpath), "300", "--seed", "2", "--out", str(opath)]
    ) == 0
    ds = load_data(opath)
    assert ds.n == 300
    stdout_counts = {tuple(int(x) for x in r.split(",")) for r in rows}
    file_counts = {
        tuple(list(map(int, s)) + [int(c)]) for s, c in zip(ds.states, ds.counts)
    }
    assert stdout_counts == file_counts


def test_cli_simulate_with_explicit_params(tmp_path, capsys):
    g = graph_one()
    gpath = tmp_path / "g.txt"
    gpath.write_text(format_graph(g))
    ppath = tmp_path / "params.json"
    ppath.write_text(json.dumps({"values": list(strong_params_graph_one())}))
    opath = tmp_path / "sim.csv"
    code = main(
        ["simulate", str(gpath), "50000", "--seed", "4",
         "--params", str(ppath), "--out", str(opath)]
    )
    assert code == 0
    ds = load_data(opath)
    freq = counts_for(g, ds) / ds.n
    p = prob_vector(g, strong_params_graph_one())
    assert np.max(np.abs(freq - p)) < 0.02

    ppath.write_text(json.dumps({"values": [0.5, 0.5]}))
    code = main(["simulate", str(gpath), "10", "--params", str(ppath)])
    assert code == 2
    assert "expected 12 values" in capsys.readouterr().err


def test_cli_bench_runs_and_writes_csv(tmp_path, capsys):
    cpath = tmp_path / "bench.csv"
    code = main(
        ["bench", "--family", "fixed", "--k-max", "2", "--max-cycles", "50",
         "--backends", "numpy", "--csv", str(cpath)]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "family" in out and "seconds" in out
    lines = cpath.read_text().strip().splitlines()
    assert lines[0].startswith("family,")
    assert len(lines) == 3  # header plus k = 1, 2


def test_cli_error_exit_codes(tmp_path, capsys):
    missing = str(tmp_path / "nope.txt")
    assert main(["info", missing]) == 2

    bad = tmp_path / "bad.txt"
    bad.write_text("a => b\n")
    assert main(["info", str(bad)]) == 2

    gpath = tmp_path / "g.txt"
    gpath.write_text("vertices: a b\na -> b\n")
    baddata = tmp_path / "bad.csv"
    baddata.write_text("a,b\n0,7\n")
    assert main(["fit", str(gpath), str(baddata)]) == 2
    err = capsys.readouterr().err
    assert err.count("error:") == 3
