"""Regenerate ``feederplan/data/ieee123.json`` from the distopf IEEE 123 tables.

Usage: python tools/make_ieee123.py <distopf>/cases/csv

The source tables (MIT licensed, Battelle Memorial Institute) hold per-phase
impedance matrices in per-unit of a 1 MVA / 2.4018 kV line-to-neutral base.
They are reduced here to a balanced positive-sequence equivalent:

* series impedance: mean self term minus mean mutual term over present phases;
* demand: sum of the three phase loads;
* regulators: kept as their series impedance, taps ignored;
* shunt capacitors: dropped;
* ampacity: by conductor class, inferred from the x/r ratio of the self term.
"""

import json
import math
import sys
from itertools import combinations
from pathlib import Path

import pandas as pd

Z_BASE_OHM = 5.768533333333334
PHASE = {"a": 0, "b": 1, "c": 2}

# per-unit 24 h shapes shipped with the same tables (ieee123_30der)
LOAD_SHAPE = [0.6, 0.6256, 0.6087, 0.5833, 0.58028, 0.6025, 0.657, 0.7477,
              0.832, 0.88, 0.94, 0.989, 0.985, 0.98, 0.9898, 0.999, 1.0,
              0.958, 0.936, 0.913, 0.876, 0.876, 0.828, 0.756]
PV_SHAPE = [0, 0, 0, 0, 0, 0, 0.1, 0.2, 0.3, 0.5, 0.8, 0.9, 1, 1, 0.99, 0.9,
            0.7, 0.4, 0.1, 0, 0, 0, 0, 0]


def _sequence_impedance(row, prefix):
    phases = [PHASE[p] for p in row.phases]
    keys = "abc"

    def term(i, j):
        i, j = sorted((i, j))
        return row[f"{prefix}_{keys[i]}{keys[j]}"]

    self_term = sum(term(p, p) for p in phases) / len(phases)
    pairs = list(combinations(phases, 2))
    mutual = sum(term(i, j) for i, j in pairs) / len(pairs) if pairs else 0.0
    return (self_term - mutual) * Z_BASE_OHM


def _ampacity(row):
    if row.type != "line":
        return 800.0
    p = PHASE[row.phases[0]]
    k = "abc"[p] * 2
    r, x = row[f"r_{k}"], row[f"x_{k}"]
    ratio = x / r if r > 0 else 10.0
    if ratio > 1.8:
        return 750.0  # 556,500 26/7 ACSR
    if ratio > 0.8:
        return 230.0  # 1/0 ACSR
    return 165.0  # 1/0 AA concentric neutral cable


def main(src):
    src = Path(src)
    buses = pd.read_csv(src / "ieee123" / "bus_data.csv")
    branches = pd.read_csv(src / "ieee123" / "branch_data.csv")
    gens = pd.read_csv(src / "ieee123_30der" / "gen_data.csv")
    bats = pd.read_csv(src / "ieee123_30der_bat" / "bat_data.csv", encoding="utf-8-sig")
    names = dict(zip(buses.id, buses.name.astype(str)))

    bus_out = []
    for _, b in buses.iterrows():
        p_kw = 1000.0 * (b.pl_a + b.pl_b + b.pl_c)
        q_kvar = 1000.0 * (b.ql_a + b.ql_b + b.ql_c)
        entry = {"id": str(b["name"])}
        if b.bus_type == "SWING":
            entry.update(kind="substation", v_setpoint=1.05)
        elif p_kw > 0 or q_kvar > 0:
            entry.update(kind="load", p_kw=round(p_kw, 3), q_kvar=round(q_kvar, 3))
        else:
            entry["kind"] = "non-load"
        entry.update(v_min=0.95, v_max=1.05)
        bus_out.append(entry)

    br_out = []
    for _, r in branches.iterrows():
        is_switch = r.type == "switch"
        br_out.append({
            "id": str(r["name"]),
            "from": names[r.fb],
            "to": names[r.tb],
            "r_ohm": round(max(_sequence_impedance(r, "r"), 0.0), 9),
            "x_ohm": round(max(_sequence_impedance(r, "x"), 0.0), 9),
            "i_max_a": _ampacity(r),
            "switchable": bool(is_switch),
            "closed": not (is_switch and r.status == "OPEN"),
        })

    pv_out = []
    for _, g in gens.iterrows():
        kw = 1000.0 * (g.p_a + g.p_b + g.p_c)
        pv_out.append({
            "id": f"pv{g['name']}",
            "bus": str(g["name"]),
            "available_kw": [round(kw * s, 6) for s in PV_SHAPE],
        })

    bat_out = []
    for _, bt in bats.iterrows():
        e_kwh = 1000.0 * bt.energy_capacity
        bat_out.append({
            "id": f"bess{bt['name']}",
            "bus": str(bt["name"]),
            "e_cap_kwh": e_kwh,
            "soc_min": 0.1,
            "soc_max": 0.9,
            "c_duration_h": e_kwh / (1000.0 * bt.s_max),
            "d_duration_h": e_kwh / (1000.0 * bt.s_max),
            "eta_chg": float(bt.charge_efficiency),
            "eta_dchg": float(bt.discharge_efficiency),
            "e_init_kwh": 0.5 * e_kwh,
            "q_rating_kvar": 0.0,
        })

    case = {
        "meta": {
            "name": "ieee123",
            "s_base_mva": 1.0,
            "v_base_kv": 4.16,
            "v_rated_pu": 1.0,
            "horizon": 24,
            "note": "balanced positive-sequence reduction of the IEEE 123-node "
                    "feeder; DER placements and daily shapes are approximations",
        },
        "buses": bus_out,
        "branches": br_out,
        "generators": [],
        "pv": pv_out,
        "batteries": bat_out,
        "zip_defaults": {"kz_p": 0.0, "ki_p": 0.0, "kp_p": 1.0,
                         "kz_q": 0.0, "ki_q": 0.0, "kp_q": 1.0},
        "load_profile": LOAD_SHAPE,
    }
    out = Path(__file__).resolve().parents[1] / "src" / "feederplan" / "data" / "ieee123.json"
    out.write_text(json.dumps(case, indent=1) + "\n")
    print(f"wrote {out}: {len(bus_out)} buses, {len(br_out)} branches")


if __name__ == "__main__":
    main(sys.argv[1])
