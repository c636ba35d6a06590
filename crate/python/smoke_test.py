"""Smoke test for the ergocert Python bindings.

Install the extension first:

    pip install --no-build-isolation -e crates/python

then run `python python/smoke_test.py` from the repository root.
"""

import json
import math
import pathlib

import jsonschema
import ergocert

ROOT = pathlib.Path(__file__).resolve().parent.parent
SCHEMA = json.loads((ROOT / "schemas" / "ergocert.schema.json").read_text())


def validate(kind, doc):
    schema = dict(SCHEMA, **{"$ref": "#/$defs/" + kind})
    jsonschema.Draft202012Validator(schema).validate(doc)


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    assert "perturbed-kernel" in ergocert.condition_ids()

    # absorbing pair: no invariant measure lives on {0}
    k = ergocert.Kernel([[0.0, 1.0], [0.0, 1.0]], states=["a", "b"])
    agree = ergocert.four_way(k, [1.0, 0.0])
    assert agree["consistent"] and not agree["solver_nonzero"]
    close(agree["index_estimate"], 1.0, 1e-9)
    agree = ergocert.four_way(k, [0.5, 0.5])
    assert agree["consistent"] and agree["solver_nonzero"]
    cert = ergocert.certify("index-c", k, m=[1.0, 0.0])
    validate("certificate", cert)
    assert cert["verdict"] == "fails"

    # two-state chain
    p = ergocert.Kernel([[0.9, 0.1], [0.2, 0.8]])
    inv = ergocert.invariant(p)
    for r in inv:
        validate("invariant_result", r)
    close(inv[0]["nu"][0], 2.0 / 3.0, 1e-12)
    ces = ergocert.invariant(p, m=[0.5, 0.5])[0]
    close(ces["nu"][0] / ces["mass"], 2.0 / 3.0, 1e-8)
    close(ergocert.harnack_constant(p, "0", "1"), 0.04 / 0.9 + 6.4, 1e-12)
    rep = ergocert.decay_report(p, [2.0 / 3.0, 1.0 / 3.0])
    validate("decay_report", rep)
    close(rep["fitted_gamma"], 0.7, 1e-6)
    aux = ergocert.auxiliary_measure(p, [1.0, 0.0])
    close(sum(aux), 1.0, 1e-12)
    r = ergocert.resolvent(p, 1.0)
    assert len(r) == 2 and abs(sum(r.rows[0]) - 1.0) < 1e-12
    lazy = ergocert.perturb(p, [0.5, 0.5])
    close(lazy.rows[0][0], 0.95, 1e-15)
    prof = ergocert.index_profile(p, [0.5, 0.5])
    validate("index_profile_output", prof)

    # continuous time
    g = ergocert.Generator([[-1.0, 1.0], [2.0, -2.0]])
    nu = ergocert.invariant(g)[0]["nu"]
    close(nu[0], 2.0 / 3.0, 1e-10)
    assert ergocert.certify("support-a2", g, m=[0.5, 0.5])["verdict"] == "holds"

    # OU grid: Harnack pipeline and the threshold flip under perturbation
    chain, comp = ergocert.generate({"id": "ou_grid"})
    assert len(chain) == 41
    assert all(math.isfinite(x) for x in comp["v"])
    common = dict(m=comp["m"], v=comp["v"], set=comp["set"], rho=comp["rho"], constants=comp["constants"])
    ok = ergocert.certify("perturbed-kernel", chain, **common)
    validate("certificate", ok)
    assert ok["verdict"] == "holds"
    assert ok["constants"]["invariant_residual"] <= 1e-10
    bad = ergocert.certify("perturbed-kernel", chain, params={"l": 2.0}, **common)
    assert bad["verdict"] == "fails"

    report = ergocert.run_pipeline(
        {
            "scenario": {"id": "birth_death", "n": 20, "p_down": 0.7},
            "measure": "dirac:0",
            "steps": [{"step": "auxiliary"}, {"step": "a2"}, {"step": "index_profile"}, {"step": "solve"}],
        }
    )
    validate("report", report)
    assert report["agreement"]["consistent"]
    assert report["errors"] == []

    try:
        ergocert.Kernel([[0.5, 0.6], [0.0, 1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("row sums above one must be rejected")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
