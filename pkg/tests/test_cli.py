import csv
import io
import json

import numpy as np
import pytest

from qki import cli
from qki.errors import VerificationFailed
from qki.ki import synth_ki_state
from qki.qcore import MultipartiteState, bell_state
from qki.qcore.io import save_state


@pytest.fixture
def files(tmp_path):
    paths = {}

    def put(name, s):
        p = tmp_path / f"{name}.json"
        save_state(s, p)
        paths[name] = str(p)

    put("bell", bell_state())
    put("cbit", MultipartiteState([("A", 2), ("R", 2)], np.diag([0.5, 0, 0, 0.5])))
    put("product", MultipartiteState([("A", 3), ("R", 2)], np.kron(np.diag([0.5, 0.3, 0.2]), np.diag([0.6, 0.4]))))
    put("qutrit", MultipartiteState([("A", 3), ("R", 3)], np.eye(9) / 9))
    put("big", MultipartiteState([("A", 9), ("R", 1)], np.eye(9) / 9))
    put("gap", synth_ki_state([(1.0, 2, 2)], 2, 0, qr_rank=1)[0])
    paths["dir"] = tmp_path
    return paths


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_decompose_bell_summary(files, capsys):
    out = files["dir"] / "bell.ki.json"
    code, _, err = run(["decompose", files["bell"], "--out", out], capsys)
    assert code == 0
    assert "1 block, dQ=2, mN=1" in err
    assert json.loads(out.read_text())["dim_A"] == 2


def test_decompose_product_summary(files, capsys):
    code, stdout, err = run(["decompose", files["product"]], capsys)
    assert code == 0
    assert "1 block, dQ=1, mN=3" in err
    assert json.loads(stdout)["blocks"][0]["n_dim"] == 3


@pytest.mark.parametrize(
    "payload, field",
    [
        ('{"dims": [["A", 2], ["R", 2]], "matrix_re": [[1, 0], [0, 0]]}', "matrix_im"),
        ('{"matrix_re": [[1]], "matrix_im": [[0]]}', "dims"),
        ('{"dims": [["A", 2]], "matrix_re": [[1, 0], [0, 0]], "matrix_im": [[0, 0], [0, 0]]}', "dims"),
        ("[1, 2", "invalid JSON"),
    ],
)
def test_malformed_input_names_field(files, capsys, payload, field):
    p = files["dir"] / "bad.json"
    p.write_text(payload)
    code, _, err = run(["decompose", p], capsys)
    assert code == 2
    assert field in err


def test_invariant_violation_is_input_error(files, capsys):
    p = files["dir"] / "neg.json"
    p.write_text(json.dumps({"dims": [["A", 2], ["R", 1]], "matrix_re": [[1.5, 0], [0, -0.5]], "matrix_im": [[0, 0], [0, 0]]}))
    code, _, err = run(["decompose", p], capsys)
    assert code == 2 and "matrix" in err


def test_verification_failure_exit_3(files, capsys, monkeypatch):
    def boom(*a, **k):
        raise VerificationFailed("reconstruction fidelity")

    monkeypatch.setattr(cli, "ki_decompose", boom)
    code, _, err = run(["decompose", files["bell"]], capsys)
    assert code == 3 and "reconstruction" in err


def test_rates_classical_bit(files, capsys):
    ki_path = files["dir"] / "cbit.ki.json"
    assert run(["decompose", files["cbit"], "--out", ki_path], capsys)[0] == 0
    code, stdout, err = run(["rates", ki_path, "--samples", 7], capsys)
    assert code == 0
    assert "corner unassisted (E,Q) = (0, 1)" in err
    assert "corner assisted (E,Q) = (0.5, 0.5)" in err
    table = rows(stdout)
    assert table[0] == ["E", "Qmin"] and len(table) == 8


def test_rates_rejects_state_file(files, capsys):
    assert run(["rates", files["bell"]], capsys)[0] == 2


def test_simulate_full_rate_and_grid(files, capsys):
    code, stdout, _ = run(["simulate", files["gap"], "--n", "2..8:2", "--rate", "full"], capsys)
    assert code == 0
    table = rows(stdout)
    assert table[0] == ["n", "rateQ", "rateE", "fidelity", "typical_mass"]
    assert [r[0] for r in table[1:]] == ["2", "4", "6", "8"]
    assert all(abs(float(r[3]) - 1) < 1e-8 for r in table[1:])


def test_simulate_assisted_on_trivial_classical_part(files, capsys):
    code, stdout, _ = run(["simulate", files["bell"], "--n", "2", "--mode", "assisted", "--slack", "0.2"], capsys)
    assert code == 0
    assert float(rows(stdout)[1][2]) == pytest.approx(0.1, abs=1e-12)


def test_simulate_cap_exit_4(files, capsys):
    code, _, err = run(["simulate", files["gap"], "--n", "20", "--rate", "0.5"], capsys)
    assert code == 4 and "dimension" in err


def test_simulate_needs_rate(files, capsys):
    assert run(["simulate", files["bell"], "--n", "2"], capsys)[0] == 2


def test_bounds_zero_row_and_determinism(files, capsys):
    argv = ["bounds", files["gap"], "--epsilons", "0,0.05", "--restarts", "1", "--iters", "5", "--env-dim", "4", "--seed", "3"]
    a_path, b_path = files["dir"] / "a.csv", files["dir"] / "b.csv"
    assert run(argv + ["--out", a_path], capsys)[0] == 0
    assert run(argv + ["--out", b_path], capsys)[0] == 0
    assert a_path.read_bytes() == b_path.read_bytes()
    table = rows(a_path.read_text())
    assert table[0] == ["epsilon", "J_lower", "Z_lower", "fidelity", "restarts"]
    assert abs(float(table[1][1])) < 1e-6
    from qki.ki import ki_decompose
    from qki.qcore.io import load_state
    from qki.rates import rate_region

    s_nc = rate_region(ki_decompose(load_state(files["gap"]))).s_N_given_C
    assert abs(float(table[1][2]) - s_nc) < 1e-6
    assert float(table[2][2]) >= float(table[1][2]) - 1e-9


def test_bounds_ansatz_dump(files, capsys):
    dump = files["dir"] / "ans.json"
    argv = ["bounds", files["bell"], "--epsilons", "0", "--ansatz-json", dump]
    assert run(argv, capsys)[0] == 0
    assert json.loads(dump.read_text())[0]["Z"]["dims"] == [1, 1, 2, 4]


def test_bounds_input_errors(files, capsys):
    assert run(["bounds", files["bell"], "--epsilons", "0.1,0"], capsys)[0] == 2
    assert run(["bounds", files["bell"], "--epsilons", "1.5"], capsys)[0] == 2
    assert run(["bounds", files["bell"], "--epsilons", "x"], capsys)[0] == 2
    assert run(["bounds", files["big"], "--epsilons", "0.1"], capsys)[0] == 4


def test_audit_bell(files, capsys):
    code, stdout, _ = run(["audit", files["bell"], "--n", "2", "--rate", "full"], capsys)
    assert code == 0
    table = rows(stdout)
    assert table[0] == ["step", "lhs", "rhs", "slack"]
    assert any(r[0] == "info:delta" for r in table)
    assert all(float(r[3]) >= -1e-8 for r in table[1:])


def test_audit_cap_and_violation(files, capsys):
    assert run(["audit", files["qutrit"], "--n", "4"], capsys)[0] == 4
    # a rate-0 code with a claimed epsilon of 0 breaks the continuity step
    code, _, err = run(["audit", files["bell"], "--n", "2", "--rate", "0", "--epsilon", "0"], capsys)
    assert code == 5 and "slack" in err


def test_seed_from_environment(files, capsys, monkeypatch):
    seen = []
    real = cli.ki_decompose

    def spy(s, seed=None, labels=("A", "R")):
        seen.append(seed)
        return real(s, seed=seed, labels=labels)

    monkeypatch.setattr(cli, "ki_decompose", spy)
    monkeypatch.setenv("QKI_SEED", "17")
    run(["decompose", files["bell"]], capsys)
    run(["decompose", files["bell"], "--seed", "2"], capsys)
    monkeypatch.delenv("QKI_SEED")
    run(["decompose", files["bell"]], capsys)
    assert seen == [17, 2, 0]


def test_simulate_rerun_identical(files, capsys):
    argv = ["simulate", files["cbit"], "--n", "2,4", "--rate", "opt+0.25,0.5"]
    assert run(argv, capsys)[1] == run(argv, capsys)[1]


def test_parse_lists():
    assert cli.parse_int_list("2..8:2") == [2, 4, 6, 8]
    assert cli.parse_int_list("1..3") == [1, 2, 3]
    assert cli.parse_int_list("5, 7") == [5, 7]
    with pytest.raises(cli.InputError):
        cli.parse_int_list("a..b")


def test_labels_option(files, capsys):
    s = MultipartiteState([("R", 2), ("A", 2)], bell_state().matrix)
    p = files["dir"] / "swapped.json"
    save_state(s, p)
    code, _, err = run(["decompose", p, "--labels", "A,R"], capsys)
    assert code == 0 and "dQ=2" in err
    assert run(["decompose", p, "--labels", "A,X"], capsys)[0] == 2
