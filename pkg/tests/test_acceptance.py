"""Exit criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the criterion lines are also
repeated in the terminal summary.  The fine mesh and the large Monte Carlo
batches take a few minutes on one core.
"""

import csv
import math

import numpy as np
import pytest

from qstail import chernoff, cli, levelcount, mesh, simulator, verify

pytestmark = pytest.mark.acceptance

LOWER_MEAN = 2 + 2 * math.log(2)  # 3.38629...
PRIOR_UPPER = 9.5185
RESULTS: list[str] = []


def report(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _read_trace(path) -> np.ndarray:
    with open(path) as fh:
        rows = [r for r in csv.reader(l for l in fh if not l.startswith("#"))]
    return np.array([float(r[1]) for r in rows[1:]])


def _mesh_run(tmp, argv):
    trace, out = tmp / "trace.csv", tmp / "L.csv"
    code = cli.main(["mesh-bound", *argv, "--trace", str(trace), "--out", str(out)])
    assert code == 0
    return _read_trace(trace), mesh.StepCDF.from_csv(out)


@pytest.fixture(scope="module")
def coarse(tmp_path_factory):
    return _mesh_run(tmp_path_factory.mktemp("coarse"),
                     ["--A", "10", "--N", "100", "--M", "100", "--iterations", "50"])


@pytest.fixture(scope="module")
def fine(tmp_path_factory):
    return _mesh_run(tmp_path_factory.mktemp("fine"),
                     ["--A", "10", "--N", "10000", "--M", "10000", "--iterations", "50"])


@pytest.fixture(scope="module")
def tn_batch(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim") / "tn.csv"
    code = cli.main(["simulate", "--kind", "tn", "--n", "1000000", "--replicates", "10000",
                     "--seed", "2024", "--out", str(path)])
    assert code == 0
    return simulator.read_samples_csv(path)


def test_criterion_1_coarse_pilot(coarse):
    u = coarse[0]
    report(1, "coarse pilot", 4.29 <= u[-1] <= 4.40, f"U_50 = {u[-1]:.6f} in [4.29, 4.40]")


def test_criterion_2_fine_pilot(fine):
    u = fine[0]
    settled = bool(np.all(np.diff(u[4:]) <= 0.0))
    report(2, "fine pilot", 4.04 <= u[-1] <= 4.15 and settled,
           f"U_50 = {u[-1]:.6f} in [4.04, 4.15]; nonincreasing from m=5: {settled}")


def test_criterion_3_soundness_floor(coarse, fine):
    both = np.concatenate([coarse[0], fine[0]])
    late = np.concatenate([coarse[0][5:], fine[0][5:]])
    ok = bool(np.all(both >= LOWER_MEAN) and np.all(late <= PRIOR_UPPER))
    report(3, "soundness floor", ok,
           f"min U_m = {both.min():.6f} >= {LOWER_MEAN:.5f}; max U_m (m > 5) = {late.max():.6f} <= {PRIOR_UPPER}")


def test_criterion_4_monte_carlo_consistency(fine, tn_batch):
    u_fine, L = fine[0][-1], fine[1]
    x = np.sort(tn_batch)
    mean = float(x.mean())
    xs = L.x_grid[:-1]
    emp = np.searchsorted(x, xs, side="right") / x.size
    # se at the larger of the two CDF values, so empty cells do not give se = 0
    p = np.maximum(emp, L.values)
    se = np.sqrt(p * (1 - p) / x.size)
    excess = float(np.max(L.values - (emp + 3 * se)))
    ok = 3.386 <= mean <= u_fine + 0.05 and excess <= 0.0
    report(4, "monte carlo consistency", ok,
           f"mean T_n/n = {mean:.5f} in [3.386, {u_fine + 0.05:.5f}]; "
           f"max L_50 - (ECDF + 3se) over {xs.size} points = {excess:.3g}")


def test_criterion_5_tail_ordering():
    batch = simulator.run_batch(simulator.SimConfig("tn", 100_000, seed=77, n=1_000_000))
    parts, ok = [], True
    for t in (6.0, 7.0, 8.0):
        p = float(np.count_nonzero(batch.samples > t)) / batch.count
        bound = chernoff.chernoff_majorant(t).majorant
        se = math.sqrt(max(p, 1.0 / batch.count) * (1 - p) / batch.count)
        ok &= p + 3 * se <= bound
        parts.append(f"t={t:g}: {p:.3g}+3se <= {bound:.4g}")
    report(5, "tail ordering", ok, "; ".join(parts))


def test_criterion_6_rate_bracket():
    parts, ok = [], True
    for t in (20.0, 50.0, 100.0, 200.0):
        lo = chernoff.rate_lower(t)
        hi = levelcount.optimize_level(t).rate_upper_numeric
        lead, slack = t * math.log(t), 2 * t * math.log(math.log(t))
        ok &= lo <= hi and abs(lo - lead) <= slack and abs(hi - lead) <= slack
        parts.append(f"t={t:g}: {lo:.2f} <= {hi:.2f}")
    report(6, "rate bracket", ok, "; ".join(parts))


def test_criterion_7_small_oracles():
    t2 = simulator.run_batch(simulator.SimConfig("tn", 10_000, seed=5, n=2, table_cutoff=0)).raw
    t3 = simulator.run_batch(simulator.SimConfig("tn", 300_000, seed=6, n=3, table_cutoff=0)).raw
    mean3 = float(t3.mean())
    se3 = float(t3.std(ddof=1)) / math.sqrt(t3.size)
    t3_ok = abs(mean3 - 8 / 3) <= 3 * se3
    keys = simulator.rng.replicate_keys(99, 1000)
    mismatches = 0
    for m in range(15):
        bnb = simulator.kernels.sample_truncs_batch(m, 0.0, keys)[0]
        for key, value in zip(keys.tolist(), bnb.tolist()):
            mismatches += value != simulator.exhaustive_trunc_s(m, key)
    ks_ok, ks_detail = verify.ks_recursion(verify.Scale(full=True, seed=7))
    ok = bool(np.all(t2 == 1)) and t3_ok and mismatches == 0 and ks_ok
    report(7, "small-instance oracles", ok,
           f"T_2 == 1: {bool(np.all(t2 == 1))}; E T_3 = {mean3:.4f} +- {3 * se3:.4f}; "
           f"bnb mismatches m<=14: {mismatches}; KS {ks_detail}")


def test_criterion_8_invariant_suites(capsys):
    code = cli.main(["verify", "--level", "full", "--seed", "0"])
    out = capsys.readouterr().out
    failed = [line.split()[1] for line in out.splitlines() if line.startswith("FAIL")]
    report(8, "invariant suites", code == 0, f"verify --level full exit {code}; failed groups: {failed or 'none'}")
