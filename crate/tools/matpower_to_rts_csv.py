#!/usr/bin/env python3
"""Convert the MATPOWER RTS-GMLC case into RTS-GMLC style bus/branch/gen CSV tables.

The MATPOWER copy of RTS-GMLC carries no fuel labels, so unit type and fuel are
recovered from each unit's capacity and cost signature (the RTS-96 unit classes
U12/U20/U50/U55/U76/U155/U350/U355/U400 plus the renewable additions). Piecewise
cost curves are re-expressed as heat-rate columns at a fuel price of 1 $/MMBtu,
which preserves the $/h curve exactly. The HVDC link is not exported.

usage: tools/matpower_to_rts_csv.py data/rts-gmlc/source/case_RTS_GMLC.m data/rts-gmlc
"""
import csv
import re
import sys
from collections import defaultdict
from pathlib import Path


def block(text, name):
    m = re.search(r"mpc\." + name + r" = \[(.*?)\];", text, re.S)
    rows = []
    for line in m.group(1).strip().splitlines():
        line = line.strip().rstrip(";")
        if line:
            rows.append([float(x) for x in line.split()])
    return rows


def names(text):
    m = re.search(r"mpc\.bus_name = \{(.*?)\};", text, re.S)
    return re.findall(r"'([^']*)'", m.group(1))


WIND_PMAX = {148.3, 799.1, 847.0, 713.5}
PV_AT_313 = {95.1, 93.3}


def classify(g, curve):
    bus, pmax, status = int(g[0]), g[8], int(g[7])
    if status == 1:
        if pmax == 0:
            return "SYNC_COND", "Sync_Cond"
        if pmax == 20:
            return "CT", "Oil"
        if pmax == 12:
            return "STEAM", "Oil"
        if pmax in (76, 155, 350):
            return "STEAM", "Coal"
        if pmax == 55:
            return "CT", "NG"
        if pmax == 355:
            return "CC", "NG"
        if pmax == 400:
            return "NUCLEAR", "Nuclear"
        if pmax == 50 and all(y == 0 for _, y in curve):
            return "HYDRO", "Hydro"
        raise ValueError(f"unclassified in-service unit at bus {bus}, pmax {pmax}")
    if pmax in WIND_PMAX:
        return "WIND", "Wind"
    if bus == 212:
        return "CSP", "Solar"
    if bus == 313 and pmax == 50:
        return "STORAGE", "Storage"
    if bus in (118, 213, 308) or (bus == 313 and pmax not in PV_AT_313) or (bus == 320 and pmax < 30):
        return "RTPV", "Solar"
    return "PV", "Solar"


def fmt(x):
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def main(src, out):
    text = Path(src).read_text()
    bus, gen, branch, gencost = (block(text, k) for k in ("bus", "gen", "branch", "gencost"))
    bus_names = names(text)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    bus_type = {1: "PQ", 2: "PV", 3: "Ref"}
    with open(out / "bus.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["Bus ID", "Bus Name", "BaseKV", "Bus Type", "MW Load", "MVAR Load", "Area", "Zone"])
        for b, name in zip(bus, bus_names):
            w.writerow([int(b[0]), name, fmt(b[9]), bus_type[int(b[1])], fmt(b[2]), fmt(b[3]), int(b[6]), int(b[10])])

    with open(out / "branch.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["UID", "From Bus", "To Bus", "R", "X", "B", "Cont Rating", "LTE Rating", "STE Rating", "Tr Ratio"])
        seen = defaultdict(int)
        for br in branch:
            fb, tb = int(br[0]), int(br[1])
            seen[(fb, tb)] += 1
            uid = f"{fb}-{tb}-{seen[(fb, tb)]}"
            w.writerow([uid, fb, tb, fmt(br[2]), fmt(br[3]), fmt(br[4]), fmt(br[5]), fmt(br[6]), fmt(br[7]), fmt(br[8])])

    with open(out / "gen.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        header = ["GEN UID", "Bus ID", "Gen ID", "Unit Type", "Fuel", "PMax MW", "PMin MW", "Fuel Price $/MMBTU"]
        header += [f"Output_pct_{k}" for k in range(4)]
        header += ["HR_avg_0"] + [f"HR_incr_{k}" for k in range(1, 4)]
        w.writerow(header)
        counter = defaultdict(int)
        for g, c in zip(gen, gencost):
            assert int(c[0]) == 1 and int(c[3]) == 4, "expected 4-point piecewise cost curves"
            pts = c[4:12]
            curve = list(zip(pts[0::2], pts[1::2]))
            unit_type, fuel = classify(g, curve)
            bus_id = int(g[0])
            counter[(bus_id, unit_type)] += 1
            k = counter[(bus_id, unit_type)]
            pmax = g[8]
            if all(y == 0 for _, y in curve) or pmax == 0:
                price = 0
                pct = [0, 0, 0, 0]
                hr = [0, 0, 0, 0]
            else:
                price = 1
                pct = [x / pmax for x, _ in curve]
                x0, y0 = curve[0]
                hr = [1000.0 * y0 / x0]
                for (xa, ya), (xb, yb) in zip(curve, curve[1:]):
                    hr.append(1000.0 * (yb - ya) / (xb - xa) if xb > xa else 0.0)
            row = [f"{bus_id}_{unit_type}_{k}", bus_id, k, unit_type, fuel, fmt(pmax), fmt(g[9]), fmt(price)]
            row += [fmt(p) for p in pct] + [fmt(h) for h in hr]
            w.writerow(row)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
