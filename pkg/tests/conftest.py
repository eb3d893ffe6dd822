"""Shared fixtures: a tiny two-latent model, a small plain logit, and
panel builders used across the suite."""
from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from cycliclv.modelspec import parse_spec
from cycliclv.panel import make_panel
from cycliclv.synthetic import CovariateSpec, GeneratorConfig, simulate_dataset

### two latents (fatigue, arousal), three covariates (x1, x2, speed),
### four indicators, magnitudes on all three speed-changing actions
TINY_SPEC_TEXT = """
[model]
name = tiny_hm

[latent fatigue]
const -> b_fat_const
x1 -> b_fat_x1

[latent arousal]
const -> b_aro_const
x2 -> b_aro_x2

[utility accelerate]
const -> b_acc_const
speed -> b_acc_speed
arousal -> b_acc_arousal
fatigue -> b_acc_fatigue

[utility brake]
const -> b_brk_const
arousal -> b_brk_arousal

[utility decelerate]
const -> b_dec_const
fatigue -> b_dec_fatigue

[utility wait]
const -> b_wai_const

[utility maintain]

[measurement tc]
arousal -> g_tc_arousal
fatigue -> g_tc_fatigue
noise = s_tc

[measurement pc]
arousal -> g_pc_arousal
noise = s_pc

[measurement hr]
fatigue -> g_hr_fatigue
noise = s_hr

[measurement hrv]
fatigue -> g_hrv_fatigue
noise = s_hrv

[continuous accelerate]
speed -> m_acc_speed
noise = s_mag_acc

[continuous brake]
speed -> m_brk_speed
noise = s_mag_brk

[continuous decelerate]
speed -> m_dec_speed
noise = s_mag_dec

[draws]
count = 200
scheme = halton
seed = 7
"""

TINY_TRUE = {
    "b_fat_const": 0.3, "b_fat_x1": 0.6,
    "b_aro_const": -0.2, "b_aro_x2": 0.8,
    "b_acc_const": 0.4, "b_acc_speed": -0.9,
    "b_acc_arousal": 0.5, "b_acc_fatigue": -0.4,
    "b_brk_const": -0.3, "b_brk_arousal": 0.7,
    "b_dec_const": -0.4, "b_dec_fatigue": 0.6,
    "b_wai_const": -0.5,
    "g_tc_arousal": 0.9, "g_tc_fatigue": 0.4, "s_tc": 0.8,
    "g_pc_arousal": 0.8, "s_pc": 1.1,
    "g_hr_fatigue": 1.1, "s_hr": 0.9,
    "g_hrv_fatigue": -0.7, "s_hrv": 1.2,
    "m_acc_speed": 1.4, "s_mag_acc": 0.6,
    "m_brk_speed": 2.0, "s_mag_brk": 1.0,
    "m_dec_speed": 1.1, "s_mag_dec": 0.9,
}

TINY_COVARIATES = {
    "x1": CovariateSpec(kind="uniform", low=-1.0, high=1.0),
    "x2": CovariateSpec(kind="uniform", low=-1.0, high=1.0),
    "speed": CovariateSpec(kind="uniform", low=0.2, high=1.0),
}

### a no-latent four-plus-reference logit on two covariates
MNL3_SPEC_TEXT = """
[model]
name = mnl3

[utility accelerate]
const -> a_const
speed -> a_speed
x1 -> a_x1

[utility brake]
const -> b_const
speed -> b_speed

[utility decelerate]
const -> d_const
x1 -> d_x1

[utility wait]
const -> w_const

[utility maintain]

[draws]
count = 1
"""

MNL3_TRUE = {
    "a_const": 0.3, "a_speed": -0.8, "a_x1": 0.5,
    "b_const": -0.2, "b_speed": 0.6,
    "d_const": 0.1, "d_x1": -0.7,
    "w_const": -0.6,
}

INTERCEPT_SPEC_TEXT = """
[model]
name = intercepts

[utility accelerate]
const -> c_accelerate

[utility brake]
const -> c_brake

[utility decelerate]
const -> c_decelerate

[utility wait]
const -> c_wait

[utility maintain]

[draws]
count = 1
"""


@pytest.fixture(scope="session")
def tiny_spec():
    return parse_spec(TINY_SPEC_TEXT)


@pytest.fixture(scope="session")
def tiny_true(tiny_spec):
    return tiny_spec.build_parameters().update(TINY_TRUE)


def make_tiny_dataset(tiny_spec, pv, n_individuals=6, t_per_individual=20,
                      seed=11):
    cfg = GeneratorConfig(
        n_individuals=n_individuals,
        t_per_individual=t_per_individual,
        seed=seed,
        covariates=dict(TINY_COVARIATES),
    )
    return simulate_dataset(tiny_spec, pv, cfg)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_spec, tiny_true):
    return make_tiny_dataset(tiny_spec, tiny_true)


@pytest.fixture(scope="session")
def mnl3_spec():
    return parse_spec(MNL3_SPEC_TEXT)


@pytest.fixture(scope="session")
def mnl3_true(mnl3_spec):
    return mnl3_spec.build_parameters().update(MNL3_TRUE)


@pytest.fixture(scope="session")
def mnl3_dataset(mnl3_spec, mnl3_true):
    cfg = GeneratorConfig(
        n_individuals=40,
        t_per_individual=50,
        seed=5,
        covariates={
            "speed": CovariateSpec(kind="uniform", low=0.0, high=1.0),
            "x1": CovariateSpec(kind="uniform", low=-1.0, high=1.0),
        },
    )
    return simulate_dataset(mnl3_spec, mnl3_true, cfg)


@pytest.fixture(scope="session")
def intercept_spec():
    return parse_spec(INTERCEPT_SPEC_TEXT)


def make_action_panel(actions, **extra_columns):
    """Panel with the given action codes, one individual, t = 0..n-1."""
    n = len(actions)
    data = {"individual_id": ["S000"] * n, "t": np.arange(n),
            "action": np.asarray(actions, dtype=int)}
    data.update(extra_columns)
    return make_panel(pd.DataFrame(data))
