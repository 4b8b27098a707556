mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use interveno::ingest::{SeriesFrame, REVENUE};
use interveno::models::rng::StreamRng;
use interveno::simulate::{
    best_case_search, estimate_rt, forecast, vaccine_adjust, CoverageRamp, ScenarioSpec, SearchSpace, VaccineSpec,
};
use interveno::{train_pair, ArtifactPair, Error};
use proptest::prelude::*;

fn trained() -> &'static (SeriesFrame, ArtifactPair) {
    static CELL: OnceLock<(SeriesFrame, ArtifactPair)> = OnceLock::new();
    CELL.get_or_init(|| {
        let frame = common::fixture("SIM", 150, 21);
        let pair = train_pair(&frame, &common::small_pipeline()).unwrap();
        (frame, pair)
    })
}

fn run(spec: &ScenarioSpec) -> interveno::simulate::ForecastResult {
    let (frame, pair) = trained();
    forecast(&pair.cases, &pair.revenue, frame, spec).unwrap()
}

#[test]
fn identity_scenario_is_exact() {
    for h in [1, 14, 35, 60] {
        let r = run(&ScenarioSpec::baseline(h));
        assert_eq!(r.cases_scenario, r.cases_baseline);
        assert_eq!(r.revenue_scenario, r.revenue_baseline);
        assert_eq!(r.dates.len(), h);
        assert!(r.protect_rate_path.iter().all(|p| *p == 0.0));
    }
    // Overrides equal to the held values are also an identity.
    let (frame, _) = trained();
    let held = *frame.dense("policy_stay_at_home").unwrap().last().unwrap();
    let r = run(&ScenarioSpec::baseline(20).with_policy("policy_stay_at_home", held));
    assert_eq!(r.cases_scenario, r.cases_baseline);
}

#[test]
fn forecast_is_deterministic() {
    let spec = ScenarioSpec::baseline(35)
        .with_policy("policy_gatherings", 4.0)
        .with_vaccine(VaccineSpec::ramp(0.4, 20, 35, 0.8));
    let (a, b) = (run(&spec), run(&spec));
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.cases_scenario), bits(&b.cases_scenario));
    assert_eq!(bits(&a.revenue_scenario), bits(&b.revenue_scenario));
    assert_eq!(a.rt_path, b.rt_path);
}

#[test]
fn vaccine_only_scales_cases_down() {
    let v = VaccineSpec::ramp(0.6, 14, 35, 0.9);
    let r = run(&ScenarioSpec::baseline(35).with_vaccine(v.clone()));
    let expected = vaccine_adjust(&r.cases_baseline, &v);
    assert_eq!(r.cases_scenario, expected);
    for (s, b) in r.cases_scenario.iter().zip(&r.cases_baseline) {
        assert!(s <= b);
    }
    for (t, p) in r.protect_rate_path.iter().enumerate() {
        assert_eq!(*p, v.protect_rate(t));
    }
}

#[test]
fn revenue_history_does_not_feed_back() {
    let (frame, pair) = trained();
    let mut altered = frame.clone();
    let mut rng = StreamRng::new(3, 3);
    for i in 0..frame.len() {
        altered.set(REVENUE, i, Some(rng.normal())).unwrap();
    }
    let spec = ScenarioSpec::baseline(35).with_policy("policy_stay_at_home", 2.0);
    let a = forecast(&pair.cases, &pair.revenue, frame, &spec).unwrap();
    let b = forecast(&pair.cases, &pair.revenue, &altered, &spec).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rt_path_tracks_forecast() {
    let r = run(&ScenarioSpec::baseline(35));
    let (frame, _) = trained();
    let mut series = frame.dense("new_cases").unwrap();
    series.extend(&r.cases_baseline);
    let full = estimate_rt(&series, 5.0).unwrap();
    let offset = series.len() - 35 - 9;
    for (t, rt) in r.rt_path.iter().enumerate() {
        assert_eq!(rt.unwrap(), full[offset + t]);
    }
}

#[test]
fn invalid_scenarios_are_rejected() {
    let (frame, pair) = trained();
    let bad = [
        ScenarioSpec::baseline(0),
        ScenarioSpec::baseline(10).with_policy("policy_stay_at_home", 4.0),
        ScenarioSpec::baseline(10).with_policy("policy_stay_at_home", 1.5),
        ScenarioSpec::baseline(10).with_policy("policy_curfew", 1.0),
        ScenarioSpec::baseline(10).with_policy("mobility_index", 1.0),
        ScenarioSpec {
            mobility_multiplier: 0.0,
            ..ScenarioSpec::baseline(10)
        },
        ScenarioSpec::baseline(10).with_vaccine(VaccineSpec::ramp(0.5, 5, 9, 0.5)),
        ScenarioSpec::baseline(10).with_vaccine(VaccineSpec::ramp(1.5, 5, 10, 0.5)),
    ];
    for spec in bad {
        assert!(
            matches!(forecast(&pair.cases, &pair.revenue, frame, &spec), Err(Error::InvalidScenario(_))),
            "{spec:?}"
        );
    }
    let mut wrong_len = ScenarioSpec::baseline(10);
    wrong_len.policy_overrides.insert("policy_gatherings".into(), vec![1.0; 3]);
    assert!(forecast(&pair.cases, &pair.revenue, frame, &wrong_len).is_err());
}

#[test]
fn best_case_ignores_enumeration_order() {
    let (frame, pair) = trained();
    let space = |levels: Vec<f64>, ramps: Vec<(f64, usize)>, eff: Vec<f64>| SearchSpace {
        horizon_days: 14,
        policy_levels: BTreeMap::from([("policy_stay_at_home".to_string(), levels)]),
        coverage_ramps: ramps
            .into_iter()
            .map(|(c, d)| CoverageRamp {
                end_coverage: c,
                ramp_days: d,
            })
            .collect(),
        efficacy: eff,
        mobility_multipliers: vec![],
        generation_interval_days: 5.0,
    };
    let a = space(vec![0.0, 1.0, 2.0, 3.0], vec![(0.2, 7), (0.5, 14)], vec![0.5, 0.9]);
    let b = space(vec![3.0, 1.0, 0.0, 2.0], vec![(0.5, 14), (0.2, 7)], vec![0.9, 0.5]);
    let ra = best_case_search(&pair.cases, &pair.revenue, frame, &a, (1.0, 2.0)).unwrap();
    let rb = best_case_search(&pair.cases, &pair.revenue, frame, &b, (1.0, 2.0)).unwrap();
    assert_eq!(ra.len(), 16);
    assert_eq!(ra, rb);
    assert!(ra.windows(2).all(|w| w[0].objective >= w[1].objective));
    // Pure protection weighting prefers the strongest vaccine program.
    let top = &best_case_search(&pair.cases, &pair.revenue, frame, &a, (1.0, 0.0)).unwrap()[0];
    let v = top.spec.vaccine.as_ref().unwrap();
    assert_eq!((v.efficacy, *v.coverage_path.last().unwrap()), (0.9, 0.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forecasts_are_nonnegative(
        stay in 0u8..4,
        gather in 0u8..5,
        mobility in 0.2f64..3.0,
        tests in 0.2f64..3.0,
        coverage in 0.0f64..1.0,
        efficacy in 0.0f64..1.0,
        horizon in 1usize..50,
    ) {
        let spec = ScenarioSpec {
            mobility_multiplier: mobility,
            tests_multiplier: tests,
            ..ScenarioSpec::baseline(horizon)
        }
        .with_policy("policy_stay_at_home", stay as f64)
        .with_policy("policy_gatherings", gather as f64)
        .with_vaccine(VaccineSpec::ramp(coverage, horizon.min(10), horizon, efficacy));
        let r = run(&spec);
        prop_assert!(r.cases_baseline.iter().chain(&r.cases_scenario).all(|c| *c >= 0.0));
        prop_assert_eq!(r.revenue_scenario.len(), horizon);
    }

    #[test]
    fn vaccine_adjust_is_monotone(
        cases in prop::collection::vec(0.0f64..1e5, 1..40),
        steps in prop::collection::vec(0.0f64..0.05, 40),
        bump in prop::collection::vec(0.0f64..0.05, 40),
        e in 0.0f64..1.0,
        de in 0.0f64..0.5,
        g in 1.0f64..10.0,
    ) {
        let n = cases.len();
        let mut c = Vec::with_capacity(n);
        let mut acc = 0.0;
        for s in &steps[..n] {
            acc = f64::min(acc + s, 1.0);
            c.push(acc);
        }
        // Pointwise higher coverage, still nondecreasing.
        let mut hi = Vec::with_capacity(n);
        let mut extra = 0.0;
        for (ci, b) in c.iter().zip(&bump[..n]) {
            extra += b;
            hi.push(f64::min(ci + extra, 1.0));
        }
        let spec = |path: &[f64], e: f64| VaccineSpec {
            coverage_path: path.to_vec(),
            efficacy: e,
            generation_interval_days: g,
        };
        let base = vaccine_adjust(&cases, &spec(&c, e));
        let more_c = vaccine_adjust(&cases, &spec(&hi, e));
        let more_e = vaccine_adjust(&cases, &spec(&c, f64::min(e + de, 1.0)));
        for t in 0..n {
            prop_assert!(base[t] <= cases[t]);
            prop_assert!(more_c[t] <= base[t]);
            prop_assert!(more_e[t] <= base[t]);
        }
    }
}
