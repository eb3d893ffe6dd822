import io

import numpy as np
import pandas as pd
import pytest

from cycliclv.panel import (
    DeriveConfig,
    PanelError,
    derive_levels,
    exclude_forced_stops,
    load_panel,
    make_panel,
    require_covariates,
    standardize_indicators,
)


def csv(text):
    return io.StringIO(text.strip() + "\n")


BASIC = """
individual_id,t,action,speed
S001,0,1,12.0
S001,1,5,13.5
S000,0,2,8.0
S000,1,4,0.5
"""


def test_load_sorts_by_individual_and_t():
    ds = load_panel(csv(BASIC))
    assert ds.n_obs == 4
    assert ds.individuals == ["S000", "S001"]
    assert ds.frame["t"].tolist() == [0, 1, 0, 1]
    assert ds.frame["speed"].tolist() == [8.0, 0.5, 12.0, 13.5]


def test_individual_slices_are_contiguous():
    ds = load_panel(csv(BASIC))
    slices = ds.individual_slices()
    assert [ind for ind, _ in slices] == ["S000", "S001"]
    assert [ (sl.start, sl.stop) for _, sl in slices ] == [(0, 2), (2, 4)]


def test_covariate_columns_exclude_keys_and_action():
    ds = load_panel(csv(BASIC))
    assert ds.covariate_columns() == ["speed"]


def test_action_names_mapped_to_codes():
    ds = load_panel(csv("""
individual_id,t,action
S000,0,brake
S000,1,maintain
"""))
    assert ds.frame["action"].tolist() == [2, 5]


def test_unknown_action_name_rejected():
    with pytest.raises(PanelError, match="unknown action"):
        load_panel(csv("individual_id,t,action\nS000,0,swerve"))


def test_action_code_out_of_range_rejected():
    with pytest.raises(PanelError, match="out of range"):
        load_panel(csv("individual_id,t,action\nS000,0,6"))


def test_missing_key_column_rejected():
    with pytest.raises(PanelError, match="individual_id"):
        load_panel(csv("rider,t\nS000,0"))


def test_non_numeric_covariate_rejected():
    with pytest.raises(PanelError, match="non-numeric"):
        load_panel(csv("individual_id,t,speed\nS000,0,fast"))


def test_non_monotone_t_rejected():
    with pytest.raises(PanelError, match="non-monotone"):
        load_panel(csv("individual_id,t\nS000,1\nS000,1"))


def test_negative_speed_rejected():
    with pytest.raises(PanelError, match="negative speed"):
        load_panel(csv("individual_id,t,speed\nS000,0,-3.0"))


def test_decreasing_time_elapsed_rejected():
    with pytest.raises(PanelError, match="time_elapsed"):
        load_panel(csv("individual_id,t,time_elapsed\nS000,0,5.0\nS000,1,4.0"))


def test_schema_rename_and_units(tmp_path):
    schema = tmp_path / "panel.schema"
    schema.write_text(
        "individual_id = RiderID\n"
        "t = Window\n"
        "speed = SPEED\n"
        "speed.units = m/s\n"
        "dist_junction = DJ\n"
        "dist_junction.units = km\n"
    )
    ds = load_panel(csv("""
RiderID,Window,SPEED,DJ
S000,0,5.0,0.02
"""), schema=schema)
    assert ds.frame["speed"].iloc[0] == pytest.approx(18.0)      # 5 m/s
    assert ds.frame["dist_junction"].iloc[0] == pytest.approx(20.0)
    assert "converted speed from m/s" in str(ds.report)


def test_schema_missing_source_column(tmp_path):
    schema = tmp_path / "panel.schema"
    schema.write_text("speed = GONE\n")
    with pytest.raises(PanelError, match="GONE"):
        load_panel(csv(BASIC), schema=schema)


def test_schema_unsupported_units(tmp_path):
    schema = tmp_path / "panel.schema"
    schema.write_text("speed = speed\nspeed.units = furlongs\n")
    with pytest.raises(PanelError, match="units"):
        load_panel(csv(BASIC), schema=schema)


def test_derive_levels_strict_inequalities():
    ds = make_panel(pd.DataFrame({
        "individual_id": ["S"] * 5,
        "t": range(5),
        "dist_junction": [5.0, 9.7, 50.0, 82.8, 90.0],
        "speed": [2.0, 4.4, 10.0, 17.4, 20.0],
    }))
    out = derive_levels(ds).frame
    assert out["dist_low"].tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]
    assert out["dist_high"].tolist() == [0.0, 0.0, 0.0, 0.0, 1.0]
    assert out["speed_low"].tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]
    assert out["speed_high"].tolist() == [0.0, 0.0, 0.0, 0.0, 1.0]


def test_derive_levels_custom_thresholds():
    ds = make_panel(pd.DataFrame({
        "individual_id": ["S"], "t": [0], "speed": [0.6],
    }))
    cfg = DeriveConfig(speed_low=0.3, speed_high=0.5)
    out = derive_levels(ds, cfg).frame
    assert out["speed_low"].iloc[0] == 0.0
    assert out["speed_high"].iloc[0] == 1.0


def test_derive_interactions_need_inputs():
    ds = make_panel(pd.DataFrame({
        "individual_id": ["S"] * 2, "t": [0, 1],
        "dist_junction": [10.0, 20.0], "knows_route": [1.0, 0.0],
        "time_elapsed": [1.0, 2.0], "dist_traveled": [0.5, 1.0],
        "temperature": [20.0, 21.0], "humidity": [0.5, 0.6],
    }))
    out = derive_levels(ds).frame
    assert out["dj_x_knows"].tolist() == [10.0, 0.0]
    assert out["time_sq"].tolist() == [1.0, 4.0]
    assert out["dist_traveled_sq"].tolist() == [0.25, 1.0]
    assert out["temp_x_humidity"].tolist() == [10.0, pytest.approx(12.6)]
    ### absent inputs, absent outputs
    ds2 = make_panel(pd.DataFrame({"individual_id": ["S"], "t": [0]}))
    assert "dj_x_knows" not in derive_levels(ds2).frame.columns


def test_exclude_forced_stops_prefers_red_light():
    ds = make_panel(pd.DataFrame({
        "individual_id": ["S"] * 4, "t": range(4),
        "action": [4, 4, 1, 4],
        "red_light": [1.0, 0.0, 1.0, 0.0],
        "traffic_light": [1.0, 1.0, 1.0, 1.0],
    }))
    out = exclude_forced_stops(ds)
    ### only wait-at-red rows drop; red non-wait and green wait stay
    assert out.n_obs == 3
    assert out.frame["action"].tolist() == [4, 1, 4]
    assert "excluded 1 forced stops" in str(out.report)


def test_exclude_forced_stops_traffic_light_fallback():
    ds = make_panel(pd.DataFrame({
        "individual_id": ["S"] * 3, "t": range(3),
        "action": [4, 4, 2],
        "traffic_light": [1.0, 0.0, 1.0],
    }))
    out = exclude_forced_stops(ds)
    assert out.frame["action"].tolist() == [4, 2]


def test_exclude_forced_stops_needs_action():
    ds = make_panel(pd.DataFrame({"individual_id": ["S"], "t": [0]}))
    with pytest.raises(PanelError, match="action"):
        exclude_forced_stops(ds)


def test_standardize_indicators_per_individual():
    ds = make_panel(pd.DataFrame({
        "individual_id": ["A"] * 3 + ["B"] * 3,
        "t": [0, 1, 2] * 2,
        "hr": [60.0, 70.0, 80.0, 100.0, 100.0, 100.0],
        "tc": [1.0, np.nan, 3.0, 0.0, 1.0, 2.0],
    }))
    out = standardize_indicators(ds).frame
    a_hr = out["hr"].to_numpy()[:3]
    assert np.mean(a_hr) == pytest.approx(0.0, abs=1e-12)
    assert np.std(a_hr) == pytest.approx(1.0)
    ### zero variance becomes zeros, not NaN or inf
    assert out["hr"].to_numpy()[3:].tolist() == [0.0, 0.0, 0.0]
    ### missing entries stay missing
    assert np.isnan(out["tc"].iloc[1])


def test_standardize_indicators_with_baseline_stats():
    ds = make_panel(pd.DataFrame({
        "individual_id": ["A"] * 2, "t": [0, 1], "hr": [70.0, 90.0],
    }))
    out = standardize_indicators(ds, stats={("A", "hr"): (80.0, 10.0)}).frame
    assert out["hr"].tolist() == [-1.0, 1.0]


def test_require_covariates_drops_sparse_rows():
    ds = make_panel(pd.DataFrame({
        "individual_id": ["S"] * 3, "t": range(3),
        "speed": [1.0, np.nan, 3.0],
    }))
    out = require_covariates(ds, ["speed"])
    assert out.n_obs == 2
    assert "rejected 1 rows" in str(out.report)


def test_require_covariates_absent_column():
    ds = make_panel(pd.DataFrame({"individual_id": ["S"], "t": [0]}))
    with pytest.raises(PanelError, match="absent"):
        require_covariates(ds, ["speed"])


def test_require_covariates_all_missing_column():
    ds = make_panel(pd.DataFrame({
        "individual_id": ["S"], "t": [0], "speed": [np.nan],
    }))
    with pytest.raises(PanelError, match="no observed values"):
        require_covariates(ds, ["speed"])


def test_row_order_invariance_on_load():
    shuffled = load_panel(csv(BASIC))
    again = make_panel(shuffled.frame.sample(frac=1.0, random_state=3))
    pd.testing.assert_frame_equal(shuffled.frame, again.frame)


def test_to_csv_round_trip(tmp_path):
    ds = load_panel(csv(BASIC))
    path = tmp_path / "panel.csv"
    ds.to_csv(path)
    again = load_panel(path)
    pd.testing.assert_frame_equal(ds.frame, again.frame)
