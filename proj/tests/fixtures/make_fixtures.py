"""Regenerates bundled MATPOWER case files and external-tool reference fixtures.

Requires pypower (pip install pypower). The fixtures are frozen into the repo;
this script documents their provenance and is not run by the test suite.
"""
import json
import os

import numpy as np
from pypower.api import case14, case118, ppoption, runopf, runpf

HERE = os.path.dirname(os.path.abspath(__file__))
CASES = os.path.join(HERE, "..", "..", "cases")


def fmt_row(row, ints):
    out = []
    for k, v in enumerate(row):
        out.append("%d" % int(v) if k in ints else repr(float(v)))
    return "\t" + "\t".join(out) + ";"


def write_case(name, ppc):
    lines = ["function mpc = %s" % name, "%% %s  IEEE test case (MATPOWER format)" % name, "",
             "mpc.version = '2';", "", "%% system MVA base", "mpc.baseMVA = %s;" % repr(float(ppc["baseMVA"])), "",
             "%% bus data", "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin", "mpc.bus = ["]
    lines += [fmt_row(r[:13], {0, 1, 6, 10}) for r in ppc["bus"]]
    lines += ["];", "", "%% generator data", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin", "mpc.gen = ["]
    lines += [fmt_row(r[:10], {0, 7}) for r in ppc["gen"]]
    lines += ["];", "", "%% branch data",
              "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax", "mpc.branch = ["]
    lines += [fmt_row(r[:13], {0, 1, 10}) for r in ppc["branch"]]
    lines += ["];", "", "%%-----  OPF Data  -----%%", "%% generator cost data",
              "%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0", "mpc.gencost = ["]
    lines += [fmt_row(r[:4 + int(r[3])], {0, 3}) for r in ppc["gencost"]]
    lines += ["];", ""]
    with open(os.path.join(CASES, name + ".m"), "w") as f:
        f.write("\n".join(lines))


def main():
    opt = ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-12, OPF_VIOLATION=1e-9,
                   PDIPM_FEASTOL=1e-9, PDIPM_GRADTOL=1e-9, PDIPM_COMPTOL=1e-9, PDIPM_COSTTOL=1e-9)
    fixtures = {}
    for name, fn in (("case14", case14), ("case118", case118)):
        write_case(name, fn())
        pf, ok = runpf(fn(), opt)
        assert ok
        opf = runopf(fn(), opt)
        assert opf["success"]
        fixtures[name] = {
            "pf": {"vm": pf["bus"][:, 7].tolist(), "va_deg": pf["bus"][:, 8].tolist(),
                   "pg_mw": pf["gen"][:, 1].tolist(), "qg_mvar": pf["gen"][:, 2].tolist()},
            "opf": {"objective": float(opf["f"]), "vm": opf["bus"][:, 7].tolist(),
                    "va_deg": opf["bus"][:, 8].tolist(), "pg_mw": opf["gen"][:, 1].tolist(),
                    "qg_mvar": opf["gen"][:, 2].tolist()},
        }
    with open(os.path.join(HERE, "reference_solutions.json"), "w") as f:
        json.dump({"tool": "pypower 5.1 (MATPOWER port): runpf NR and runopf PIPS",
                   "cases": fixtures}, f, indent=1)


if __name__ == "__main__":
    main()
