"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Seeds are fixed up front (``SEEDS``) and never tuned after looking at results.
Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""
import math
import random
import time

import numpy as np
import pytest

from nambd.dynamics import brownian_displacements, simulate_batch
from nambd.experiment import AnalyticBeta, ExperimentSpec, run_experiment, summarize
from nambd.model import AdaptiveStep, DetectorKind, FixedStep, RngKind, SimulatorConfig, make_geometry
from nambd.rates import (CallablePotential, ScreenedCoulomb, analytic_beta, association_rate,
                         beta_infinity, hitting_probability, rate_with_potential,
                         required_replications, smoluchowski_rate)
from nambd.spacepi import (Action, Apply, BinOp, Call, Compare, FixedPosition, ModelDocument,
                           MotionDecl, Name, Neg, Nil, Num, PmfDecl, Prefix, ProcessDef, Restrict,
                           SpherePosition, choice, format_model, load_bundled_nam, lower_to_nam,
                           par, parse_model)
from nambd.stochastics import RandomStream, replication_seeds

SEEDS = {1: 101, 2: 202, 3: 303, 4: 404, 5: 505, 6: 606, 7: 707, 8: 8000, 9: 909, 10: 1010}
BETA_REF = 0.111
A, B, Q = 10.0, 50.0, 100.0

EVENT_MT = SimulatorConfig(RngKind.MERSENNE_TWISTER, DetectorKind.EVENT_TRIGGERED, FixedStep(0.1))
EVENT_LCG = SimulatorConfig(RngKind.BASELINE_LCG, DetectorKind.EVENT_TRIGGERED, FixedStep(0.1))
STEPPED = SimulatorConfig(RngKind.MERSENNE_TWISTER, DetectorKind.TIME_STEPPED, FixedStep(0.1))
ADAPTIVE = SimulatorConfig(RngKind.MERSENNE_TWISTER, DetectorKind.TIME_STEPPED,
                           AdaptiveStep(0.1, 0.01, 0.1))

pytestmark = pytest.mark.acceptance


def _emit(capsys, n, ok, detail):
    line = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


def _se(p, n):
    return math.sqrt(p * (1 - p) / n)


def _beta(config, D, seed, n, **kw):
    r = simulate_batch(make_geometry(A, B, Q, D), config, replication_seeds(seed, 0, n), **kw)
    return float(r.reacted.mean()), n


# 1 ------------------------------------------------------------------------------------

def criterion_1(capsys=None):
    n = required_replications(BETA_REF, 0.05, 0.99) * 4
    t0 = time.perf_counter()
    out = {D: _beta(EVENT_MT, D, SEEDS[1] + i, n, threads=1)[0] for i, D in enumerate((0.5, 1.0, 2.0))}
    wall = time.perf_counter() - t0
    ok = n == 1048 and all(abs(b - BETA_REF) <= 0.02 for b in out.values())
    detail = f"n={n} " + " ".join(f"D={D}:{b:.4f}" for D, b in out.items()) + f" ({wall:.1f}s, 1 thread)"
    return _emit(capsys, 1, ok, detail)


# 2 ------------------------------------------------------------------------------------

def criterion_2(capsys=None):
    Ds = (16.0, 32.0, 64.0, 128.0, 256.0)
    n = 20_000
    res = {name: [_beta(cfg, D, SEEDS[2] + 10 * i + j, n)[0] for i, D in enumerate(Ds)]
           for j, (name, cfg) in enumerate((("fixed", STEPPED), ("event", EVENT_MT),
                                            ("adaptive", ADAPTIVE)))}
    fixed, event, adapt = res["fixed"], res["event"], res["adaptive"]
    # non-increasing within 2 sigma between neighbours, and a significant overall drop
    monotone = all(fixed[i + 1] <= fixed[i] + 2 * math.hypot(_se(fixed[i], n), _se(fixed[i + 1], n))
                   for i in range(len(Ds) - 1))
    drop = fixed[0] - fixed[-1] > 2 * math.hypot(_se(fixed[0], n), _se(fixed[-1], n))
    # flat: every event point within 3 SE of the analytic value
    exact = analytic_beta(A, B, Q)
    flat = all(abs(b - exact) <= 3 * _se(exact, n) for b in event)
    between = fixed[-1] < adapt[-1] < event[-1]
    ok = monotone and drop and flat and between
    detail = (f"fixed={[round(b, 4) for b in fixed]} event={[round(b, 4) for b in event]} "
              f"adaptive@256={adapt[-1]:.4f} monotone={monotone} drop={drop} flat={flat} "
              f"between={between}")
    return _emit(capsys, 2, ok, detail)


# 3 ------------------------------------------------------------------------------------

def criterion_3(capsys=None):
    n = 10_000
    mt, _ = _beta(EVENT_MT, 2.0, SEEDS[3], n)
    lcg, _ = _beta(EVENT_LCG, 2.0, SEEDS[3], n)
    se = math.hypot(_se(mt, n), _se(lcg, n))
    ok = abs(mt - lcg) < 3 * se
    return _emit(capsys, 3, ok, f"MT={mt:.4f} LCG={lcg:.4f} |diff|={abs(mt - lcg):.4f} 3SE={3 * se:.4f}")


# 4 ------------------------------------------------------------------------------------

def criterion_4(capsys=None):
    rng = random.Random(SEEDS[4])
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        a, b, q = sorted(10 ** rng.uniform(-2, 4) for _ in range(3))
        if not a < b < q:
            continue
        D = 10 ** rng.uniform(-3, 3)
        kb, kq = smoluchowski_rate(D, b), smoluchowski_rate(D, q)
        k = association_rate(kb, beta_infinity(analytic_beta(a, b, q), kb, kq))
        worst = max(worst, abs(k / (4 * math.pi * D * a) - 1))
    wall = time.perf_counter() - t0
    ok = worst <= 1e-12 and wall < 1.0
    return _emit(capsys, 4, ok, f"max rel err={worst:.2e} ({wall * 1e3:.0f} ms)")


# 5 ------------------------------------------------------------------------------------

def _simpson_oracle(D, b, Qc, kappa, r_max=2e4, n=4_000_000):
    """Composite Simpson in r on [b, r_max]; the remaining tail is the bare 1/(D r_max)."""
    r = np.linspace(b, r_max, n + 1)
    f = np.exp(Qc * np.exp(-kappa * r) / r) / (r * r * D)
    h = (r_max - b) / n
    integral = h / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum())
    return 4 * math.pi / (integral + 1.0 / (D * r_max))


def criterion_5(capsys=None):
    rng = random.Random(SEEDS[5])
    zero = CallablePotential(lambda r: 0.0)  # opaque: forces the quadrature path
    worst0 = 0.0
    for _ in range(100):
        D, b = 10 ** rng.uniform(-3, 3), 10 ** rng.uniform(-2, 4)
        worst0 = max(worst0, abs(rate_with_potential(D, b, zero) / smoluchowski_rate(D, b) - 1))
    worst1 = 0.0
    for D, b, Qc, kappa in ((1.0, 50.0, -2.0, 0.1), (1.0, 50.0, 2.0, 0.1), (8.0, 10.0, -20.0, 0.1),
                            (0.5, 25.0, 5.0, 0.05)):
        k = rate_with_potential(D, b, ScreenedCoulomb(Qc, kappa))
        worst1 = max(worst1, abs(k / _simpson_oracle(D, b, Qc, kappa) - 1))
    ok = worst0 <= 1e-8 and worst1 <= 1e-6
    return _emit(capsys, 5, ok, f"zero-potential max rel err={worst0:.2e}; "
                                f"screened-Coulomb vs Simpson max rel err={worst1:.2e}")


# 6 ------------------------------------------------------------------------------------

def criterion_6(capsys=None):
    n, D = 20_000, 8.0
    geo = make_geometry(A, B, Q, D)
    parts, ok = [], True
    for i, r0 in enumerate((15.0, 30.0, 50.0, 80.0)):
        res = simulate_batch(geo, EVENT_MT, replication_seeds(SEEDS[6] + i, 0, n), start_radius=r0)
        p_hat = float(res.reacted.mean())
        p = hitting_probability(A, r0, Q)
        z = (p_hat - p) / _se(p, n)
        ok &= abs(z) <= 3
        parts.append(f"r0={r0:g}:{p_hat:.4f}/{p:.4f}(z={z:+.2f})")
    return _emit(capsys, 6, ok, " ".join(parts))


# 7 ------------------------------------------------------------------------------------

def criterion_7(capsys=None):
    D, dt, n = 1.7, 0.1, 1_000_000
    ok, parts = True, []
    for i, kind in enumerate((RngKind.MERSENNE_TWISTER, RngKind.BASELINE_LCG)):
        d = brownian_displacements(RandomStream(kind, SEEDS[7] + i), n, dt, D)
        var_err = np.abs(d.var(axis=0) / (2 * D * dt) - 1).max()
        msd_err = abs((d * d).sum(axis=1).mean() / (6 * D * dt) - 1)
        ok &= var_err <= 0.005 and msd_err <= 0.02
        parts.append(f"{kind.value}: var err={var_err:.2e} msd err={msd_err:.2e}")
    return _emit(capsys, 7, ok, "; ".join(parts))


# 8 ------------------------------------------------------------------------------------

def criterion_8(capsys=None):
    seeds = range(SEEDS[8], SEEDS[8] + 200)
    geo = make_geometry(A, B, Q, 2.0)
    hits, ns = 0, []
    for s in seeds:
        (v,) = run_experiment(ExperimentSpec(AnalyticBeta(), 0.05, 0.99, [geo], [EVENT_MT],
                                             master_seed=s))
        ns.append(v.estimate.n)
        hits += abs(v.estimate.beta_hat - BETA_REF) <= 0.05
    cov = hits / len(seeds)
    ok = cov >= 0.98
    return _emit(capsys, 8, ok, f"coverage={cov:.3f} over {len(seeds)} seeds "
                                f"(n median={int(np.median(ns))}, range {min(ns)}..{max(ns)})")


# 9 ------------------------------------------------------------------------------------

KEYWORDS = {"rand", "not", "defined", "otherwise", "new", "nil", "inf"}
_ALPHA = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


class DocGen:
    """Plain-``random`` document generator (much faster than a Hypothesis strategy)."""

    def __init__(self, seed):
        self.r = random.Random(seed)

    def ident(self):
        while True:
            s = self.r.choice(_ALPHA) + "".join(
                self.r.choice(_ALPHA + "0123456789_") for _ in range(self.r.randint(0, 5)))
            if s not in KEYWORDS:
                return s

    def idents(self, lo, hi):
        out = []
        for _ in range(self.r.randint(lo, hi)):
            s = self.ident()
            if s not in out:
                out.append(s)
        return out or [self.ident()] * (lo > 0)

    def num(self):
        r = self.r.random()
        if r < 0.3:
            return float(self.r.randint(0, 1000))
        if r < 0.6:
            return self.r.uniform(0, 1e6)
        return 10 ** self.r.uniform(-3, 5)

    def expr(self, names, funcs, depth=3):
        if depth == 0 or self.r.random() < 0.35:
            return Num(self.num()) if self.r.random() < 0.4 else Name(self.r.choice(names))
        k = self.r.random()
        if k < 0.15:
            return Neg(self.expr(names, funcs, depth - 1))
        if k < 0.85:
            return BinOp(self.r.choice("+-*/^"), self.expr(names, funcs, depth - 1),
                         self.expr(names, funcs, depth - 1))
        args = tuple(self.expr(names, funcs, depth - 1) for _ in range(self.r.randint(0, 2)))
        return Apply(self.r.choice(funcs), args)

    def term(self, procs, channels, radius, depth=3):
        if depth == 0 or self.r.random() < 0.25:
            return Nil() if self.r.random() < 0.6 else Call(self.r.choice(procs))
        k = self.r.random()
        if k < 0.55:
            act = Action(self.r.choice(channels), self.r.choice("!?"),
                         "~" if self.r.random() < 0.7 else self.ident(), radius())
            return Prefix(act, self.term(procs, channels, radius, depth - 1))
        if k < 0.7:
            return choice(self.term(procs, channels, radius, depth - 1),
                          self.term(procs, channels, radius, depth - 1))
        if k < 0.85:
            return par(self.term(procs, channels, radius, depth - 1),
                       self.term(procs, channels, radius, depth - 1))
        return Restrict(self.r.choice(channels), self.term(procs, channels, radius, depth - 1))

    def document(self):
        r = self.r
        radii = {n: 10 ** r.uniform(-3, 5) for n in self.idents(1, 4)}
        rnames = sorted(radii)
        positions = {}
        for n in self.idents(1, 3):
            if r.random() < 0.5:
                positions[n] = FixedPosition(*(r.uniform(-1e4, 1e4) for _ in range(3)))
            else:
                rad = Name(r.choice(rnames)) if r.random() < 0.6 else Num(10 ** r.uniform(-3, 5))
                positions[n] = SpherePosition(rad, r.random() < 0.5, tuple(r.sample("xyz", 3)))
        pnames = sorted(positions)
        pmf = None
        if r.random() < 0.6:
            pmf = PmfDecl(self.ident(),
                          None if r.random() < 0.5 else self.expr(["r", "kappa"], [self.ident()]))
        motions = {}
        for name in self.idents(0, 2):
            params = tuple(self.idents(0, 2))
            vocab = ["x", "y", "z", "xdot", "ydot", "zdot", *rnames, *params]
            constraint = Compare(r.choice(["<", "<=", "=", ">", ">="]),
                                 self.expr(vocab, pnames), self.expr(vocab, pnames))
            escape = tuple((v, Apply(r.choice(pnames), (Name(v),)) if r.random() < 0.5
                            else self.expr(vocab, pnames)) for v in r.sample("xyz", r.randint(1, 3)))
            motions[name] = MotionDecl(params, constraint, escape)
        proc_names = self.idents(1, 4)
        channels = ["c", "coll", "bind", "go"]

        def radius():
            k = r.random()
            if k < 0.6:
                return Name(r.choice(rnames))
            return Num(math.inf) if k < 0.7 else Num(10 ** r.uniform(-3, 5))

        procs = {}
        for name in proc_names:
            motion = r.choice(sorted(motions)) if motions and r.random() < 0.5 else None
            pos = r.choice(pnames) if r.random() < 0.5 else None
            procs[name] = ProcessDef(self.term(proc_names, channels, radius), motion, pos)
        missing = _unmatched([p.body for p in procs.values()],
                             lambda x: x.value if isinstance(x, Num) else radii[x.id])
        if missing:
            comp = self.ident()
            while comp in procs:
                comp = self.ident()
            procs[comp] = ProcessDef(choice(*[Prefix(a, Nil()) for a in missing]))
            proc_names.append(comp)
        initial = tuple(r.choice(proc_names) for _ in range(r.randint(1, 4)))
        return ModelDocument(positions, radii, pmf, motions, procs, initial)


def _unmatched(bodies, radius_value):
    """Free send/receive pairs with no complementary partner (channel, resolved radius)."""
    sends, recvs = {}, {}
    for body in bodies:
        stack = [(body, frozenset())]
        while stack:
            p, bound = stack.pop()
            if isinstance(p, Restrict):
                stack.append((p.body, bound | {p.name}))
            elif isinstance(p, Prefix):
                if p.action.channel not in bound:
                    key = (p.action.channel, radius_value(p.action.radius))
                    (sends if p.action.polarity == "!" else recvs).setdefault(key, p.action)
                stack.append((p.cont, bound))
            elif hasattr(p, "parts"):
                stack.extend((q, bound) for q in p.parts)
            elif hasattr(p, "alternatives"):
                stack.extend((q, bound) for q in p.alternatives)
    missing = [Action(a.channel, "?", "~", a.radius) for k, a in sends.items() if k not in recvs]
    missing += [Action(a.channel, "!", "~", a.radius) for k, a in recvs.items() if k not in sends]
    return missing


def criterion_9(capsys=None):
    doc = load_bundled_nam()
    low = lower_to_nam(doc, 1.0)
    g = low.geometry
    fig_ok = (g.a, g.b, g.q) == (10, 50, 100)
    text = format_model(doc)
    fig_rt = parse_model(text) == doc and format_model(parse_model(text)) == text
    gen = DocGen(SEEDS[9])
    failures = 0
    for _ in range(1000):
        d = gen.document()
        t = format_model(d)
        try:
            again = parse_model(t)
            failures += not (again == d and format_model(again) == t)
        except Exception:
            failures += 1
    ok = fig_ok and fig_rt and failures == 0
    return _emit(capsys, 9, ok, f"nam model lowers to (a,b,q)=({g.a:g},{g.b:g},{g.q:g}) "
                                f"round-trip={fig_rt}; generated 1000 docs, failures={failures}")


# 10 -----------------------------------------------------------------------------------

def criterion_10(capsys=None):
    grid = [make_geometry(A, B, Q, D) for D in (2.0, 16.0)]
    spec = ExperimentSpec(AnalyticBeta(), 0.05, 0.99, grid, [EVENT_MT, EVENT_LCG, STEPPED, ADAPTIVE],
                          master_seed=SEEDS[10])
    one = summarize(run_experiment(spec, threads=1)).to_json()
    many = summarize(run_experiment(spec, threads=8)).to_json()
    ok = one.encode() == many.encode()
    return _emit(capsys, 10, ok, f"1-thread vs 8-thread report.json identical={ok} ({len(one)} bytes)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_criterion(crit, capsys):
    assert crit(capsys)


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
    raise SystemExit(0 if all(results) else 1)
