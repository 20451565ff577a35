import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chpersist.dynamics import State, evolve, initial_state
from chpersist.errors import AdmissibilityError, PreconditionError, WindowError
from chpersist.persistence import (RefusedCheck, decay_preservation_check, gronwall_constant, quintuple_norm,
                                   quintuple_series, traced_constants, verify_corollary1,
                                   verify_differential_inequalities, verify_theorem1)
from chpersist.spectral import Grid
from chpersist.weights import WeightSpec, certify, psi_weight

ONE = WeightSpec()
POLY2 = WeightSpec(c=2.0)
CRITICAL = WeightSpec(a=1.0, b=1.0, c=-2.0)


class TestQuintupleNorm:
    def test_zero(self):
        s = initial_state("zero")
        assert quintuple_norm(s, POLY2, 2.0) == 0.0

    def test_finite_for_half_exponential(self):
        assert math.isfinite(quintuple_norm(initial_state("sech"), WeightSpec(a=0.5, b=1.0), math.inf))

    @pytest.mark.parametrize("p", [2.0, math.inf])
    def test_infinite_for_overgrowing_weight(self, p):
        assert math.isinf(quintuple_norm(initial_state("sech"), WeightSpec(a=2.0, b=1.0), p))

    def test_unit_weight_sup_equals_M(self, sech_run):
        for i in (0, 50, 200):
            s = sech_run.state(i)
            n = quintuple_norm(s, None, math.inf, window=(-s.grid.L, s.grid.L))
            assert n == pytest.approx(sech_run.diagnostics[i].M_t, rel=1e-12)

    def test_series_matches_pointwise(self, sech_run_short):
        ser = quintuple_series(sech_run_short, POLY2, 2.0)
        for i in (0, 37, 100):
            assert ser[i] == pytest.approx(quintuple_norm(sech_run_short.state(i), POLY2, 2.0), rel=1e-12)


class TestGronwallConstant:
    def test_unit_weight(self):
        k = traced_constants(certify(ONE))
        assert k["C2"] == pytest.approx(1.0) and k["C3"] == pytest.approx(2.0) and k["C5"] == pytest.approx(4.0)
        assert k["C"] == pytest.approx(14.0, rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(c=st.floats(1.0, 10.0), A=st.floats(0.0, 10.0), g1=st.floats(0.1, 10.0), g2=st.floats(0.1, 10.0),
           field=st.sampled_from(["c_mod", "A", "dGv_l1", "Gv_l1"]), factor=st.floats(1.0, 4.0))
    def test_monotone(self, c, A, g1, g2, field, factor):
        cert = replace(certify(ONE), c_mod=c, A=A, dGv_l1=g1, Gv_l1=g2)
        bigger = replace(cert, **{field: getattr(cert, field) * factor if field != "A" else A + factor})
        assert gronwall_constant(bigger) >= gronwall_constant(cert)

    def test_A_doubling(self):
        cert = replace(certify(ONE), A=1.5)
        assert gronwall_constant(replace(cert, A=3.0)) - gronwall_constant(cert) >= 1.5

    def test_c_mod_doubling(self):
        cert = certify(POLY2)
        k1 = traced_constants(cert)
        k2 = traced_constants(replace(cert, c_mod=2 * cert.c_mod))
        assert k2["C2"] == pytest.approx(2 * k1["C2"])
        assert k2["C"] > k1["C"]


class TestGronwallBound:
    def test_zero_run(self, zero_run):
        r = verify_theorem1(zero_run, POLY2, 2.0)
        assert r.verdict and np.all(r.N_p == 0)

    def test_initial_entry(self, sech_run_short):
        r = verify_theorem1(sech_run_short, POLY2, 2.0)
        assert r.bound[0] == r.N_p[0] and r.margin[0] == 0.0

    @pytest.mark.parametrize("p", [2.0, math.inf])
    def test_sech_polynomial(self, sech_run, p):
        r = verify_theorem1(sech_run, POLY2, p)
        assert r.verdict
        assert np.all(r.N_p <= r.bound * (1 + 1e-9))

    def test_stride_doubling_keeps_verdict(self, sech_run):
        for spec in (POLY2, psi_weight(1.0)):
            assert verify_theorem1(sech_run, spec, 2.0).verdict == verify_theorem1(sech_run.subsample(2), spec, 2.0).verdict

    def test_inadmissible(self, sech_run_short):
        with pytest.raises(AdmissibilityError):
            verify_theorem1(sech_run_short, WeightSpec(a=1.0, b=1.0), 2.0)

    def test_infinite_initial_norm(self, sech_run_short):
        # admissible weight growing like exp(0.9|x|) times a power beats the sech tail
        with pytest.raises(PreconditionError):
            verify_theorem1(sech_run_short, WeightSpec(a=0.9, b=1.0, c=3.0), math.inf)

    def test_csv(self, sech_run_short, tmp_path):
        r = verify_theorem1(sech_run_short, POLY2, 2.0)
        path = tmp_path / "t1.csv"
        r.to_csv(path)
        lines = path.read_text().splitlines()
        assert "t,N,bound,margin" in lines
        assert any(line.startswith("# C_used=") for line in lines)
        assert any(line == "# verdict=pass" for line in lines)


class TestDifferentialInequalities:
    def test_zero_run(self, zero_run):
        r = verify_differential_inequalities(zero_run, POLY2, 2.0)
        assert r.holds
        assert all(np.all(d == 0) for d in r.derivative.values())

    def test_single_component(self, ch_run):
        r = verify_differential_inequalities(ch_run, ONE, 2.0)
        assert r.holds
        for name in ("rho", "rhox"):
            assert np.all(r.derivative[name] == 0) and np.all(r.rhs[name] == 0)
        for name in ("u", "ux", "uxx"):
            assert np.all(r.rhs[name] > 0)

    def test_sech_polynomial(self, sech_run):
        r = verify_differential_inequalities(sech_run, POLY2, 2.0)
        assert r.holds, {k: c.worst for k, c in r.components.items()}

    def test_coarse_stride_refused(self, sech_run):
        with pytest.raises(RefusedCheck):
            verify_differential_inequalities(sech_run.subsample(5), POLY2, 2.0)

    def test_csv(self, ch_run, tmp_path):
        r = verify_differential_inequalities(ch_run, ONE, 2.0)
        r.to_csv(tmp_path / "d.csv")
        header = [l for l in (tmp_path / "d.csv").read_text().splitlines() if not l.startswith("#")][0]
        assert header.startswith("t,d_u,rhs_u")


class TestTwoTierBounds:
    def test_zero_run(self, zero_run):
        r = verify_corollary1(zero_run, CRITICAL, math.inf)
        assert r.verdict and np.all(r.tier1 == 0) and np.all(r.tier2 == 0)

    def test_critical_weight_bounded(self, sech_run_short):
        r = verify_corollary1(sech_run_short, CRITICAL, math.inf)
        assert r.verdict and math.isfinite(r.sup1) and math.isfinite(r.sup2)

    def test_unit_weight_matches_theorem1(self, sech_run_short):
        r = verify_corollary1(sech_run_short, ONE, 2.0)
        t1 = verify_theorem1(sech_run_short, ONE, 2.0)
        assert np.allclose(r.tier1, t1.N_p, rtol=1e-14)
        assert np.allclose(r.tier2, t1.N_p, rtol=1e-14)

    def test_integrability_refused(self, sech_run_short):
        with pytest.raises(PreconditionError):
            verify_corollary1(sech_run_short, WeightSpec(a=1.0, b=1.0), 2.0)


class TestDecay:
    def test_zero_run_vacuous(self, zero_run):
        r = decay_preservation_check(zero_run, "one_sided_exponential", 0.9)
        assert r.verdict and r.vacuous

    def test_one_sided_sech(self, sech_run):
        r = decay_preservation_check(sech_run, "one_sided_exponential", 0.9)
        assert r.verdict
        assert r.initial_rate == pytest.approx(1.0, abs=0.01)

    def test_algebraic_datum(self):
        g = Grid(1200.0, 65536)
        f = 0.5 * (1 + g.x**2) ** -2
        tr = evolve(State(g, f, 0.6 * f), 0.1, output_every=0.05)
        r = decay_preservation_check(tr, "algebraic", 4.0)
        assert r.initial_rate == pytest.approx(4.0, abs=0.05)
        assert r.verdict

    def test_stated_rate_too_fast(self, sech_run_short):
        with pytest.raises(PreconditionError):
            decay_preservation_check(sech_run_short, "one_sided_exponential", 1.5)

    def test_empty_window(self, sech_run_short):
        with pytest.raises(WindowError):
            decay_preservation_check(sech_run_short, "one_sided_exponential", 0.9, fit_window=(50.0, 40.0))

    def test_unknown_kind(self, sech_run_short):
        with pytest.raises(ValueError):
            decay_preservation_check(sech_run_short, "gaussian", 1.0)
