from __future__ import annotations

import json
import shutil
import subprocess
from fractions import Fraction

import gmpy2
import pytest

from qspec.cli import decimal_string, main
from qspec.holder import GEOMETRIC


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_bands_json(capsys):
    code, out, _ = run(capsys, "bands", "--cf", "1*", "--lambda", "30", "--depth", "8", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == "qspec.bands/1"
    assert doc["params"] == {"cf": "1*", "lambda": "30.0", "precision_bits": 256, "depth": 8}
    assert [len(lev["bands"]) for lev in doc["levels"]] == [2, 2, 4, 6, 10, 16, 26, 42, 68]
    b = doc["levels"][0]["bands"][0]
    assert set(b) == {"lo", "hi", "kind", "parent", "type_index"}
    assert b["lo"] == "-2e+0" and b["parent"] is None
    deep = doc["levels"][8]["bands"][0]
    assert len(deep["lo"].split("e")[0]) > 70  # all working digits
    assert deep["parent"] is not None


def test_bands_output_is_byte_identical(capsys):
    argv = ("bands", "--cf", "[1,2]*", "--lambda", "30", "--depth", "6")
    _, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    assert first == second


def test_verify_three(capsys):
    code, out, err = run(capsys, "verify", "--cf", "3*", "--lambda", "30", "--depth", "6")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == "qspec.verify/1" and doc["passed"] is True
    assert "FAIL" not in err and err.count("PASS") == len(doc["checks"])


def test_holder_rejects_small_lambda(capsys):
    code, out, err = run(capsys, "holder", "--cf", "1*", "--lambda", "10", "--depth", "4")
    assert code == 1 and out == "" and "lambda" in err


def test_holder_json(capsys):
    code, out, _ = run(capsys, "holder", "--b", "2", "--lambdas", "30,100", "--depth", "5")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == "qspec.holder/1" and len(doc["reports"]) == 2
    rep = doc["reports"][0]
    for key in ("gamma_lower", "gamma_upper", "L_seq", "U_seq", "empirical_min", "dichotomy"):
        assert key in rep
    assert rep["dichotomy"]["classification"] == GEOMETRIC
    assert len(doc["asymptotics"]) == 2


@pytest.mark.parametrize("argv, header", [
    (("cf", "--cf", "2*", "--depth", "5"), "k,a_k,p_k,q_k"),
    (("potential", "--cf", "1*", "--lambda", "30", "--n", "8"), "n,V"),
    (("bands", "--cf", "1*", "--lambda", "30", "--depth", "3"), "level,index,lo,hi,kind,parent,type_index"),
    (("dos", "--cf", "1*", "--lambda", "30", "--depth", "4"), "x,N"),
    (("holder", "--b", "1", "--lambda", "30", "--depth", "4"),
     "lambda,level,index,kind,log_mass,log_length,exponent"),
])
def test_csv_versioned_header(capsys, argv, header):
    code, out, _ = run(capsys, *argv, "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == f"# qspec-{argv[0] if argv[0] != 'holder' else 'exponents'} csv v1"
    assert lines[1] == header and len(lines) > 2


def test_cf_and_potential(capsys):
    _, out, _ = run(capsys, "cf", "--cf", "1*", "--depth", "10")
    doc = json.loads(out)
    assert doc["schema"] == "qspec.cf/1"
    assert doc["convergents"][-1] == {"k": 10, "p": 55, "q": 89}
    assert doc["beta"].startswith("6.18033988749894848204586834365638117720309")
    _, out, _ = run(capsys, "potential", "--cf", "1*", "--lambda", "30", "--n", "5")
    assert json.loads(out)["potential"] == ["30.0", "0.0", "30.0", "30.0", "0.0"]


def test_dos_intervals(capsys, tmp_path):
    dest = tmp_path / "dos.json"
    code, out, _ = run(capsys, "dos", "--cf", "1*", "--lambda", "30", "--depth", "4",
                       "--interval", "-3:3", "--interval", "27:33", "--out", str(dest))
    assert code == 0 and out == ""
    doc = json.loads(dest.read_text())
    assert doc["schema"] == "qspec.dos/1" and doc["band_mass"] == "1/5"
    assert doc["comparison"]["n"] == 13
    masses = [Fraction(r["band_count"]) if "/" in r["band_count"] else float(r["band_count"])
              for r in doc["comparison"]["rows"]]
    assert sum(float(m) for m in masses) == pytest.approx(1.0)


@pytest.mark.parametrize("argv", [
    ("bands", "--cf", "1,2,x", "--lambda", "30", "--depth", "3"),
    ("bands", "--cf", "1*", "--lambda", "-1", "--depth", "3"),
    ("bands", "--cf", "1*", "--lambda", "30", "--depth", "99"),
    ("bands", "--cf", "1*", "--lambda", "30"),
    ("dos", "--cf", "1*", "--lambda", "30", "--depth", "3", "--interval", "5:1"),
    ("dos", "--cf", "1*", "--lambda", "30", "--depth", "3", "--interval", "-9:1"),
    ("holder", "--b", "1", "--cf", "1*", "--lambda", "30", "--depth", "3"),
    ("cf", "--cf", "1*", "--precision", "20"),
    ("nonsense",),
])
def test_invalid_input_exit_1(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 1 and out == "" and err.startswith("qspec: invalid input")


def test_decimal_string():
    assert decimal_string(3) == "3"
    assert decimal_string(Fraction(1, 5)) == "1/5"
    assert decimal_string(0.5) == "0.5"
    with gmpy2.context(gmpy2.get_context(), precision=128):
        s = decimal_string(gmpy2.mpfr(1) / 3)
    assert s.startswith("3.33333333333333333333333333333333333333") and s.endswith("e-1")
    assert decimal_string(gmpy2.mpfr(-2)) == "-2e+0"


@pytest.mark.skipif(shutil.which("qspec") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["qspec", "cf", "--cf", "2*", "--depth", "3"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["convergents"][-1]["q"] == 12
