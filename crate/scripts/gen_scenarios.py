#!/usr/bin/env python3
"""Regenerates the bundled scenario files under crates/core/scenarios/.

The generator is deterministic (fixed seeds); rerunning it must leave the
committed files unchanged.
"""

import random
from collections import deque
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "scenarios"

MBPS100 = 100_000_000
GBPS1 = 1_000_000_000


def line_bytes(payload):
    return payload + 22 + 20


def bfs(adj, src, dst, switches):
    prev = {src: None}
    q = deque([src])
    while q:
        n = q.popleft()
        if n == dst:
            break
        for m in sorted(adj[n], key=lambda x: order[x]):
            if m in prev:
                continue
            if m != dst and m not in switches:
                continue
            prev[m] = n
            q.append(m)
    path = [dst]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


order = {}


class Builder:
    def __init__(self, name, description):
        self.name = name
        self.description = description
        self.head = {}
        self.classes = []
        self.nodes = []
        self.links = []
        self.schedules = []
        self.port_schedules = []
        self.flows = []
        self.preemption = None

    def node(self, name, kind):
        order[name] = len(order)
        self.nodes.append((name, kind))

    def link(self, a, b, rate, length=10):
        self.links.append((a, b, rate, length))

    def adjacency(self):
        adj = {n: set() for n, _ in self.nodes}
        for a, b, _, _ in self.links:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def render(self):
        out = ['format = "tsnsim/1"', f'name = "{self.name}"', f'description = "{self.description}"']
        for k, v in self.head.items():
            out.append(f"{k} = {v}")
        if self.preemption:
            out += ["", "[preemption]"] + [f"{k} = {v}" for k, v in self.preemption.items()]
        for c in self.classes:
            out += ["", "[[class]]"] + [f"{k} = {v}" for k, v in c.items()]
        for n, kind in self.nodes:
            out += ["", "[[node]]", f'name = "{n}"', f'kind = "{kind}"']
        for a, b, rate, length in self.links:
            out += ["", "[[link]]", f'a = "{a}"', f'b = "{b}"', f"rate_bps = {rate}", f"length_m = {length:.1f}"]
        for name, entries in self.schedules:
            out += ["", "[[schedule]]", f'name = "{name}"', "entries = ["]
            for d, open_ in entries:
                out.append(f"  {{ duration_ns = {d}, open = [{', '.join(map(str, open_))}] }},")
            out.append("]")
        for f in self.flows:
            out += ["", "[[flow]]"]
            for k, v in f.items():
                out.append(f"{k} = {v}")
        return "\n".join(out) + "\n"

    def write(self, filename):
        OUT.mkdir(parents=True, exist_ok=True)
        (OUT / filename).write_text(self.render())


def q(s):
    return f'"{s}"'


def qlist(items):
    return "[" + ", ".join(q(i) for i in items) + "]"


STD_CLASSES = [
    {"id": 7, "name": q("tt"), "kind": q("tt"), "preemption": q("express")},
    {"id": 6, "name": q("avb-a"), "kind": q("avb"), "preemption": q("preemptable")},
    {"id": 0, "name": q("be"), "kind": q("be"), "preemption": q("preemptable")},
]


def std_classes(fraction):
    cls = [dict(c) for c in STD_CLASSES]
    cls[1]["idle_slope_fraction"] = fraction
    return cls


def add_traffic(b, rng, switches, stations, rate, cycle, n_tt, n_avb, n_be, fraction,
                tt_payload, avb_periods, be_period, avb_cap, tt_max_hops=4):
    adj = b.adjacency()
    load = {}

    def route(src, dst):
        return bfs(adj, src, dst, set(switches))

    # Time-triggered flows from different sources never share an egress port,
    # so a delayed frame cannot reorder another flow's frames downstream.
    owner = {}
    i = 0
    attempts = 0
    while i < n_tt:
        attempts += 1
        if attempts > 100_000:
            raise SystemExit(f"{b.name}: cannot place {n_tt} TT flows")
        src, dst = rng.sample(stations, 2)
        r = route(src, dst)
        hops = list(zip(r, r[1:]))
        if len(hops) > tt_max_hops or any(owner.get(h, src) != src for h in hops):
            continue
        if sum(1 for f in b.flows if f["src"] == q(src)) >= 2:
            continue
        for h in hops:
            owner[h] = src
        b.flows.append({
            "name": q(f"tt{i + 1}"),
            "src": q(src),
            "dst": q(dst),
            "class": 7,
            "payload": rng.randint(*tt_payload),
            "period_ns": cycle,
            "offset_ns": 0,
            "route": qlist(r),
        })
        i += 1

    made = 0
    while made < n_avb:
        src, dst = rng.sample(stations, 2)
        payload = rng.randint(64, 1500)
        period = rng.choice(avb_periods)
        r = route(src, dst)
        bps = line_bytes(payload) * 8 * 1e9 / period
        hops = list(zip(r, r[1:]))
        if any(load.get(h, 0) + bps > avb_cap * fraction * rate for h in hops):
            continue
        for h in hops:
            load[h] = load.get(h, 0) + bps
        made += 1
        b.flows.append({
            "name": q(f"avb{made}"),
            "src": q(src),
            "dst": q(dst),
            "class": 6,
            "payload": payload,
            "period_ns": period,
            "route": qlist(r),
        })

    for i in range(n_be):
        src, dst = rng.sample(stations, 2)
        b.flows.append({
            "name": q(f"be{i + 1}"),
            "src": q(src),
            "dst": q(dst),
            "class": 0,
            "payload": rng.randint(64, 1500),
            "period_ns": be_period,
            "route": qlist(route(src, dst)),
        })


def gate_entries(cycle, tt_windows):
    """TT windows given as (start, length); everything else open to AVB/BE."""
    entries = []
    t = 0
    for start, length in tt_windows:
        if start > t:
            entries.append((start - t, [6, 0]))
        entries.append((length, [7]))
        t = start + length
    if t < cycle:
        entries.append((cycle - t, [6, 0]))
    return entries


def medium_mesh(n_avb, cycle=500_000, tt_windows=((0, 70_000), (250_000, 70_000)), fraction=0.2,
                cap=0.9, n_be=4, periods=(500_000, 1_000_000, 2_000_000), seed=2020,
                tt_payload=(64, 100), tt_max_hops=3):
    order.clear()
    b = Builder(
        f"medium-mesh-{n_avb}",
        "Medium-mesh-like topology (6 switches, 12 end stations, 100 Mbit/s). "
        "Flow parameters approximate the published test case.",
    )
    b.head = {"seed": 1, "duration": q("200ms"), "default_schedule": q("mm")}
    b.classes = std_classes(fraction)
    switches = [f"sw{i}" for i in range(1, 7)]
    stations = [f"es{i}" for i in range(1, 13)]
    for s in switches:
        b.node(s, "switch")
    for e in stations:
        b.node(e, "end_station")
    for a, c in [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 1), (1, 4), (2, 5), (3, 6)]:
        b.link(f"sw{a}", f"sw{c}", MBPS100)
    for i, e in enumerate(stations):
        b.link(e, switches[i // 2], MBPS100)
    b.schedules.append(("mm", gate_entries(cycle, tt_windows)))
    rng = random.Random(seed)
    add_traffic(b, rng, switches, stations, MBPS100, cycle, 15, n_avb, n_be, fraction,
                tt_payload, list(periods), 2_000_000, cap, tt_max_hops)
    return b


def orion(n_avb=50, seed=7):
    """Orion-CEV-like shape: five core switches in a ring, ten edge switches
    hanging off them in pairs, 31 end stations on the edge switches."""
    order.clear()
    b = Builder(
        "orion",
        "Orion-CEV-like topology (15 switches, 31 end stations, 1 Gbit/s). "
        "Flow parameters approximate the published test case.",
    )
    b.head = {"seed": 1, "duration": q("50ms"), "default_schedule": q("orion")}
    b.classes = std_classes(0.75)
    core = [f"sw{i}" for i in range(1, 6)]
    edge = [f"sw{i}" for i in range(6, 16)]
    stations = [f"es{i}" for i in range(1, 32)]
    for s in core + edge:
        b.node(s, "switch")
    for e in stations:
        b.node(e, "end_station")
    for i in range(5):
        b.link(core[i], core[(i + 1) % 5], GBPS1)
    for i, s in enumerate(edge):
        b.link(s, core[i // 2], GBPS1)
    for i, e in enumerate(stations):
        b.link(e, edge[i % 10], GBPS1, 5)
    cycle = 500_000
    b.schedules.append(("orion", gate_entries(cycle, ((0, 30_000), (250_000, 30_000)))))
    rng = random.Random(seed)
    add_traffic(b, rng, core + edge, stations, GBPS1, cycle, 20, n_avb, 4, 0.75,
                (64, 200), [125_000, 250_000, 500_000], 1_000_000, 0.9, 4)
    return b


def pathology():
    """One switch between two stations. The AVB frames are 123-byte MAC
    frames, just below the smallest preemptable size, with periods that slide
    across the TT window."""
    order.clear()
    b = Builder(
        "pathology-123",
        "Non-preemptable 123-byte AVB frames drifting against a TT window; "
        "run with --gb off to see TT frames delayed.",
    )
    b.head = {"seed": 1, "duration": q("100ms"), "default_schedule": q("p")}
    b.preemption = {"mode": q("without-hr")}
    b.classes = std_classes(0.25)
    for n, kind in (("talker", "end_station"), ("sw", "switch"), ("listener", "end_station")):
        b.node(n, kind)
    b.link("talker", "sw", MBPS100)
    b.link("sw", "listener", MBPS100)
    b.schedules.append(("p", gate_entries(250_000, ((0, 40_000),))))
    b.flows.append({"name": q("tt"), "src": q("talker"), "dst": q("listener"), "class": 7,
                    "payload": 64, "period_ns": 250_000, "offset_ns": 0})
    for i, period in enumerate((97_003, 131_011, 173_021)):
        b.flows.append({"name": q(f"avb{i + 1}"), "src": q("talker"), "dst": q("listener"),
                        "class": 6, "payload": 101, "period_ns": period})
    return b


def credit_trace():
    """Two back-to-back 1500-byte AVB frames meeting a guardband on a single
    link; small enough to check every credit value by hand."""
    order.clear()
    b = Builder(
        "credit-trace",
        "Single 100 Mbit/s port, AVB window [0, 600us), TT window [600us, 1ms), two AVB frames.",
    )
    b.head = {"seed": 1, "duration": q("2ms"), "default_schedule": q("c"),
              "slope_scaling": q("gate-only")}
    b.classes = std_classes(0.3)
    b.node("a", "end_station")
    b.node("b", "end_station")
    b.link("a", "b", MBPS100)
    b.schedules.append(("c", [(600_000, [6, 0]), (400_000, [7])]))
    for i, off in enumerate((400_000, 420_000)):
        b.flows.append({"name": q(f"avb{i + 1}"), "src": q("a"), "dst": q("b"), "class": 6,
                        "payload": 1500, "period_ns": 1_000_000, "offset_ns": off, "count": 1})
    return b


def main():
    for n in (30, 40, 50, 60):
        medium_mesh(n).write(f"medium-mesh-{n}.toml")
    orion().write("orion.toml")
    pathology().write("pathology-123.toml")
    credit_trace().write("credit-trace.toml")


if __name__ == "__main__":
    main()
