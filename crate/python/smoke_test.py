"""Smoke test for the wfsec_py extension module.

Uses an installed ``wfsec_py`` when available; otherwise builds the
extension with cargo and loads it from a temporary directory.
"""

import importlib
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent
PROTOCOLS = ROOT / "protocols"


def load_module():
    try:
        return importlib.import_module("wfsec_py")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "wfsec-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libwfsec_py.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(built, tmp / "wfsec_py.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("wfsec_py")


def main():
    wf = load_module()

    ns = wf.Protocol.load(str(PROTOCOLS / "ns.proto"))
    assert ns.name == "NS"
    assert len(ns.roles()) == 4
    assert len(ns.message_space()) == 6

    report = ns.analyze("fmax")
    assert not report.fulfilled
    rows = report.rows()
    assert [r["verdict"] for r in rows] == ["Fulfilled"] * 3 + ["Not Fulfilled"]
    assert rows[3]["lower_bound"] == "{A, A_3, B}"
    assert rows[3]["blame"] == ["A_3"]

    nsl = wf.Protocol.load(str(PROTOCOLS / "nsl.proto"))
    assert nsl.analyze().fulfilled
    assert len(nsl.message_space()) == 7

    assert ns.normalize("{{Na}_ka}_ka-1") == "Na"
    assert ns.is_well_protected(["{A.Na}_kb"])
    assert not ns.is_well_protected(["Na"])
    assert ns.interpret("Na", "{A.Na}_kb", "fmax") == "{A, B}"
    assert sorted(ns.select("Na", "{A.Na}_kb", "fmax")) == ["A", "kb-1"]

    code, out, _ = wf.run_cli(["analyze", str(PROTOCOLS / "nsl.proto")])
    assert code == 0 and "Fulfilled" in out

    try:
        wf.Protocol.parse("principals A; step 1: A -> A : {Nc}_k;")
    except ValueError as e:
        assert "undeclared" in str(e)
    else:
        raise AssertionError("expected a parse error")

    print("smoke test passed")


if __name__ == "__main__":
    main()
