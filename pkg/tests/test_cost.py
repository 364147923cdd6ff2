import json
from fractions import Fraction

import pytest

from vdbb import cost
from vdbb.cost import Anchor
from vdbb.errors import InsufficientAnchors, NegativeCoefficient, UncalibratedModel
from vdbb.sim import parse_config

REF = "4x8x8_4x8_VDBB_IM2C"


@pytest.fixture(scope="module")
def coeffs():
    return cost.reference_coefficients()


# -------------------------------------------------------------- reuse


def test_reuse_examples():
    assert cost.reuse_metrics(parse_config("1x1x1_4x4")).inter_tpe_reuse == 2
    assert cost.reuse_metrics(parse_config("4x8x4_2x2")).intra_tpe_reuse == 2
    assert cost.reuse_metrics(parse_config("4x8x4_2x2_VDBB"), 2).intra_tpe_reuse == Fraction(4, 5)


def test_reuse_closed_forms_are_exact():
    r = cost.reuse_metrics(parse_config("2x8x4_3x5_DBB", nnz=2))
    assert r.inter_tpe_reuse == Fraction(2 * 2 * 4 * 15, 2 * 8 * 3 + 4 * 2 * 5)
    assert isinstance(r.intra_tpe_reuse, Fraction)


# ------------------------------------------------------------- anchors


def test_reference_anchor_table(coeffs):
    r = cost.estimate_cost(parse_config(REF), coeffs, 3, 0.5)
    assert r.power_mw == pytest.approx(
        {"array": 317.5, "wt_sram": 78.5, "act_sram": 31.0, "mcu": 50.5, "im2col": 10.0}, abs=1e-9)
    assert r.total_power_mw == pytest.approx(487.5, abs=1e-9)
    assert r.area_mm2 == pytest.approx(
        {"array": 0.732, "wt_sram": 0.54, "act_sram": 2.16, "mcu": 0.30, "im2col": 0.01}, abs=1e-12)
    assert round(r.total_area_mm2, 2) == 3.74
    assert round(r.tops_per_w, 1) == 21.9
    assert round(r.tops_per_mm2, 2) == 2.85
    assert r.nominal_tops == 4.0 and r.effective_tops == pytest.approx(4.0 * 8 / 3)


def test_reference_without_im2col(coeffs):
    r = cost.estimate_cost(parse_config(REF), coeffs, 3, 0.5, im2col_enabled=False)
    assert r.power_mw["act_sram"] == pytest.approx(93.0)
    assert r.total_power_mw == pytest.approx(539.5)


@pytest.mark.parametrize("nnz, tops_w", [(4, 16.8), (2, 31.3), (1, 55.7)])
def test_calibrated_efficiency(coeffs, nnz, tops_w):
    r = cost.estimate_cost(parse_config(REF), coeffs, nnz, 0.5)
    assert r.tops_per_w == pytest.approx(tops_w, rel=0.05)


def test_vdbb_efficiency_monotone(coeffs):
    cfg = parse_config(REF)
    eff = [cost.estimate_cost(cfg, coeffs, n, 0.5).tops_per_w for n in range(8, 0, -1)]
    assert all(a < b for a, b in zip(eff, eff[1:]))


def test_effective_tops_scaling(coeffs):
    cfg = parse_config("4x8x4_4x4_VDBB")
    r8 = cost.estimate_cost(cfg, coeffs, 8, 0.5)
    for n in range(1, 8):
        assert cost.estimate_cost(cfg, coeffs, n, 0.5).effective_tops == pytest.approx(r8.nominal_tops * 8 / n)


def test_fixed_dbb_plateau(coeffs):
    cfg = parse_config("4x8x4_4x8_DBB", nnz=4)
    eff = {n: cost.estimate_cost(cfg, coeffs, n, 0.5).effective_tops for n in range(1, 9)}
    assert eff[4] == eff[3] == eff[2] == eff[1] == pytest.approx(2 * eff[8])
    assert eff[5] == eff[8]


def test_gating_lowers_array_power(coeffs):
    cfg = parse_config(REF)
    lo = cost.estimate_cost(cfg, coeffs, 3, 0.9).power_mw["array"]
    hi = cost.estimate_cost(cfg, coeffs, 3, 0.1).power_mw["array"]
    assert lo < hi


def test_uncalibrated():
    with pytest.raises(UncalibratedModel):
        cost.estimate_cost(parse_config(REF), None)


def test_bad_activation_sparsity(coeffs):
    with pytest.raises(ValueError):
        cost.estimate_cost(parse_config(REF), coeffs, 3, 1.5)


# ----------------------------------------------------------- calibration


def test_calibration_fit(coeffs):
    cal = cost.calibrate(cost.load_anchors(), coeffs)
    assert cal.slope == pytest.approx(16.3, abs=0.2)
    assert cal.power_at(2.0) == pytest.approx(476, abs=2)
    assert max(abs(r) for r in cal.residuals) < 0.01 * 476
    assert cal.coeffs.p_act_path_slope == cal.slope


def test_calibration_reproduces_bundled(coeffs):
    cal = cost.calibrate(cost.load_anchors(), coeffs)
    assert cal.slope == pytest.approx(coeffs.p_act_path_slope, rel=1e-12)


def test_single_anchor_is_insufficient(coeffs):
    with pytest.raises(InsufficientAnchors):
        cost.calibrate([Anchor(3, 8, power_mw=487.5)], coeffs)
    with pytest.raises(InsufficientAnchors):
        cost.calibrate([Anchor(3, 8, power_mw=487.5), Anchor(3, 8, power_mw=490)], coeffs)


def test_flat_anchors_give_zero_slope(coeffs):
    cal = cost.calibrate([Anchor(n, 8, power_mw=500.0) for n in (1, 2, 4)], coeffs)
    assert cal.slope == 0.0


def test_falling_anchors_are_non_physical(coeffs):
    with pytest.raises(NegativeCoefficient):
        cost.calibrate([Anchor(1, 8, power_mw=400.0), Anchor(4, 8, power_mw=500.0)], coeffs)


def test_coefficients_round_trip(tmp_path, coeffs):
    path = tmp_path / "c.json"
    cost.save_coefficients(coeffs, path)
    assert cost.load_coefficients(path) == coeffs
    assert "provenance" in json.loads(path.read_text())


def test_coefficients_env_override(tmp_path, monkeypatch, coeffs):
    path = tmp_path / "c.json"
    cost.save_coefficients(coeffs.with_(p_mcu=60.0), path)
    monkeypatch.setenv("VDBB_COEFFS", str(path))
    assert cost.load_coefficients().p_mcu == 60.0


def test_negative_coefficient_rejected(coeffs):
    with pytest.raises(NegativeCoefficient):
        coeffs.with_(p_mcu=-1.0)


# ------------------------------------------------------------- baseline


def test_baseline_ratios(coeffs):
    base = parse_config("1x1x1_32x64")
    vd = cost.baseline_comparison(parse_config("8x8x8_4x4_VDBB_IM2C"), base, coeffs)
    assert vd["area_ratio"] > 2.5 and vd["power_ratio"] > 2.0
    dbb = cost.baseline_comparison(parse_config("4x8x8_4x4_DBB_IM2C", nnz=4), base, coeffs)
    assert dbb["area_ratio"] > 2.0


def test_identical_configs(coeffs):
    cfg = parse_config("2x8x2_8x8")
    r = cost.baseline_comparison(cfg, cfg, coeffs)
    assert r == {"area_ratio": 1.0, "power_ratio": 1.0}
