import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ggdquant import adaptive as ad
from ggdquant import cli, ggd
from ggdquant import experiments as ex
from ggdquant.errors import ParseError


def write_text(path, x):
    path.write_text("".join(f"{float(v)!r}\n" for v in x))


def read_csv(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


@pytest.fixture
def two_band_file(tmp_path):
    x = np.concatenate([
        ggd.sample(ggd.GgdParams(0.5, 4.0), 20000, 1),
        np.zeros(40),
        ggd.sample(ggd.GgdParams(2.0, 1.0), 6000, 2),
    ])
    f = tmp_path / "coef.txt"
    write_text(f, x)
    b = tmp_path / "bands.txt"
    b.write_text("0,20000\n20000,20040\n20040,26040\n")
    return f, b, x


def test_parse_bands():
    assert cli.parse_bands("0,3\n3,3\n# note\n3,10\n", 10) == ((0, 3), (3, 3), (3, 10))
    for bad in ("0,3\n4,10\n", "0,3\n2,10\n", "0,5\n", "0;5\n5,10\n", "0,5\n5,4\n"):
        with pytest.raises(ParseError):
            cli.parse_bands(bad, 10)


def test_estimate_rows(tmp_path, two_band_file, capsys):
    f, b, _ = two_band_file
    assert cli.main(["estimate", str(f), "--bands", str(b)]) == 0
    rows = read_csv(capsys.readouterr().out)
    assert len(rows) == 3
    assert float(rows[0]["alpha_hat"]) == pytest.approx(0.5, rel=0.1)
    assert rows[1]["degenerate"] == "1" and rows[1]["alpha_hat"] == "nan"
    assert float(rows[2]["alpha_hat"]) == pytest.approx(2.0, rel=0.1)


def test_estimate_laplacian_file(tmp_path, capsys):
    f = tmp_path / "lap.f32"
    ggd.sample(ggd.GgdParams(1.0), 10**5, 5).astype("<f4").tofile(f)
    assert cli.main(["estimate", str(f), "--format", "f32le"]) == 0
    (row,) = read_csv(capsys.readouterr().out)
    assert 0.95 <= float(row["alpha_hat"]) <= 1.05


def test_encode_decode_text(tmp_path, two_band_file, capsys):
    f, b, x = two_band_file
    out, rep, dec = tmp_path / "c.ez", tmp_path / "r.csv", tmp_path / "y.txt"
    assert cli.main(["encode", str(f), "--bands", str(b), "--target-db", "20", "--out", str(out), "--report", str(rep)]) == 0
    assert cli.main(["decode", str(out), "--out", str(dec)]) == 0
    rows = read_csv(rep.read_text())
    y = np.array([float(t) for t in dec.read_text().split()])
    assert y.size == x.size
    for r in rows:
        a, e = int(r["start"]), int(r["end"])
        mse = float(np.mean((x[a:e] - y[a:e]) ** 2))
        assert mse == float(r["distortion"])
    assert float(rows[0]["gain_db"]) == pytest.approx(20, abs=1)
    assert rows[1]["flags"] == str(ad.FLAG_DEGENERATE)


def test_encode_decode_binary_and_stable(tmp_path):
    x = ggd.sample(ggd.GgdParams(0.8, 0.3), 5000, 3).astype("<f4")
    f = tmp_path / "c.f32"
    x.tofile(f)
    outs = []
    for i in range(2):
        c = tmp_path / f"c{i}.ez"
        assert cli.main(["encode", str(f), "--format", "f32le", "--target-mse", "0.003", "--kind", "oezz",
                         "--out", str(c), "--report", str(tmp_path / "r.csv")]) == 0
        y = tmp_path / f"y{i}.f32"
        assert cli.main(["decode", str(c), "--format", "f32le", "--out", str(y)]) == 0
        outs.append((c.read_bytes(), y.read_bytes()))
    assert outs[0] == outs[1]
    (row,) = read_csv((tmp_path / "r.csv").read_text())
    y = np.frombuffer(outs[0][1], dtype="<f4").astype(float)
    assert float(np.mean((x.astype(float) - y) ** 2)) == float(row["distortion"])
    assert row["kind"] == "oezz"


def test_target_at_variance_gives_zero_rate(tmp_path, capsys):
    x = ggd.sample(ggd.GgdParams(1.0), 4000, 8)
    f = tmp_path / "c.txt"
    write_text(f, x)
    assert cli.main(["encode", str(f), "--target-db", "0", "--out", str(tmp_path / "c.ez")]) == 0
    (row,) = read_csv(capsys.readouterr().out)
    assert float(row["rate"]) == 0.0


def test_table_reuse_gives_identical_container(tmp_path, capsys):
    x = ggd.sample(ggd.GgdParams(0.5), 3000, 4)
    f = tmp_path / "c.txt"
    write_text(f, x)
    table = ad.build_table((0.5,), "soezz")
    t = tmp_path / "table.csv"
    t.write_text(table.to_csv())
    reloaded = tmp_path / "table2.csv"
    reloaded.write_text(ad.OperatingPointTable.from_csv(t.read_text()).to_csv())
    blobs = []
    for tab in (t, reloaded):
        out = tmp_path / "c.ez"
        assert cli.main(["encode", str(f), "--target-db", "15", "--table", str(tab), "--out", str(out)]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


def test_container_round_trip_property(tmp_path):
    rng = np.random.default_rng(0)
    table = ad.build_table((0.5, 1.3), "oezz")
    blocks = [ad.adaptive_encode(rng.laplace(size=n), 0.05, table) for n in (3, 50, 400)]
    blocks.append(ad.adaptive_encode(np.zeros(7), 0.05, table))
    raw = cli.write_container(blocks)
    back = cli.read_container(raw)
    assert [b.side for b in back] == [b.side for b in blocks]
    for a, b in zip(back, blocks):
        np.testing.assert_array_equal(a.indices, b.indices)
    with pytest.raises(ParseError):
        cli.read_container(raw[:-1])
    with pytest.raises(ParseError):
        cli.read_container(raw + b"\1\0")


def test_exit_codes(tmp_path, capsys):
    f = tmp_path / "bad.txt"
    f.write_text("1.0\nabc\n")
    assert cli.main(["estimate", str(f)]) == cli.EXIT_DATA
    assert cli.main(["estimate", str(tmp_path / "missing.txt")]) == cli.EXIT_DATA
    g = tmp_path / "ok.txt"
    write_text(g, [1.0, -2.0, 0.5])
    assert cli.main(["encode", str(g), "--target-mse", "-1", "--out", str(tmp_path / "o")]) == cli.EXIT_DATA
    assert cli.main(["decode", str(g), "--out", str(tmp_path / "o")]) == cli.EXIT_DATA
    assert cli.main(["fig3", "--n", "5000"]) == cli.EXIT_DATA  # no seed
    assert cli.main(["fig3", "--n", "10", "--seed", "1"]) == cli.EXIT_DATA
    with pytest.raises(SystemExit) as exc:
        cli.main(["encode", str(g), "--out", str(tmp_path / "o")])
    assert exc.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == cli.EXIT_USAGE


def test_nonconvergence_exit_code(capsys):
    code = cli.main(["rdcurves", "--alpha", "2.0", "--m-points", "201", "--tol", "1e-9", "--n-slopes", "4"])
    assert code == cli.EXIT_NONCONV


def test_soezz_table_command(tmp_path):
    out = tmp_path / "t.csv"
    assert cli.main(["soezz-table", "--alpha", "0.5", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# tool=ggdquant-")
    rows = read_csv(text)
    r = np.array([float(x["rate"]) for x in rows])
    d = np.array([float(x["distortion"]) for x in rows])
    assert np.all(np.diff(r) > 0) and np.all(np.diff(d) < 0)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ggdquant", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "ggdquant" in res.stdout


def test_rdcurves_small_grid(tmp_path):
    assert cli.main(["rdcurves", "--alpha", "2.0", "1.0", "--m-points", "801", "--out", str(tmp_path)]) == 0
    rows = read_csv((tmp_path / "rdcurves_alpha2.csv").read_text())
    row = next(r for r in rows if math.isclose(float(r["D"]), 0.01))
    assert float(row["R"]) == pytest.approx(3.32, abs=0.05)
    assert float(row["R_OUSQ"]) == pytest.approx(3.58, abs=0.08)
    for r in rows:
        vals = [float(r[k]) for k in ("R", "R_USQ", "R_OUSQ")]
        if not any(math.isnan(v) for v in vals):
            assert vals[1] >= vals[2] - 1e-12 and vals[2] >= vals[0]
    assert (tmp_path / "rdcurves_alpha1.csv").exists()


def test_fig3_deterministic_small(tmp_path):
    cfg = ex.ExperimentConfig("fig3", (0.67,), n=5000, seed=3, m_points=401)
    a = ex.run(cfg)[0].to_csv()
    b = ex.run(cfg)[0].to_csv()
    assert a == b
    assert "seed=3" in a.splitlines()[0]


def test_config_validation():
    with pytest.raises(Exception):
        ex.ExperimentConfig("fig4")
    with pytest.raises(Exception):
        ex.ExperimentConfig("losscurves", (0.25,), n=10**5)
    ex.ExperimentConfig("losscurves", (1.0, 2.0))  # model only: no seed needed
    with pytest.raises(Exception):
        ex.ExperimentConfig("rdcurves", (0.01,))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=8))
def test_bands_from_lengths(lengths):
    text = ""
    pos = 0
    for n in lengths:
        text += f"{pos},{pos + n}\n"
        pos += n
    bands = cli.parse_bands(text, pos)
    assert [b - a for a, b in bands] == lengths
