//! Synthetic regional series with a known policy effect.
//!
//! Log cases follow an AR(1) around a policy-dependent mean:
//!
//! ```text
//! L_t = phi * L_{t-1} + (1 - phi) * m_t + eps_t
//! m_t = ln(base) + ln(stay_effect) * stay_t + 0.01 * mobility_t
//! new_cases_t = exp(L_t) * weekly[dow_t] * exp(nu_t)
//! ```
//!
//! Mobility, testing, and weather are independent of the policies so each
//! effect stays identifiable. The other policies only move revenue, which
//! falls linearly with stay-at-home and workplace closing.

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::features::day_of_week;
use crate::ingest::SeriesFrame;
use crate::models::rng::StreamRng;

/// Monday-first multiplicative weekly reporting cycle.
pub const WEEKLY_FACTORS: [f64; 7] = [1.16, 1.22, 1.12, 1.05, 0.98, 0.72, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    pub base_cases: f64,
    pub phi: f64,
    /// Multiplier on equilibrium cases per stay-at-home level.
    pub stay_effect: f64,
    pub latent_sd: f64,
    pub obs_sd: f64,
    /// Revenue change per stay-at-home level.
    pub revenue_stay_slope: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_days: 240,
            start: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            seed: 7,
            base_cases: 2000.0,
            phi: 0.85,
            stay_effect: 0.7,
            latent_sd: 0.02,
            obs_sd: 0.02,
            revenue_stay_slope: -0.06,
        }
    }
}

/// Piecewise-constant ordinal path changing every 28 to 56 days.
fn policy_path(rng: &mut StreamRng, n: usize, max_level: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut level = rng.below(max_level + 1);
    while out.len() < n {
        let run = 28 + rng.below(29);
        out.extend(std::iter::repeat_n(level as f64, run.min(n - out.len())));
        let mut next = rng.below(max_level + 1);
        while next == level {
            next = rng.below(max_level + 1);
        }
        level = next;
    }
    out
}

pub fn generate(region_id: &str, cfg: &SynthConfig) -> SeriesFrame {
    let n = cfg.n_days;
    let rng = |stream: u64| StreamRng::new(cfg.seed, stream);

    let mut r = rng(1);
    let stay = policy_path(&mut r, n, 3);
    let school = policy_path(&mut r, n, 3);
    let work = policy_path(&mut r, n, 3);
    let gather = policy_path(&mut r, n, 4);

    let mut r = rng(2);
    let mut mobility = Vec::with_capacity(n);
    let mut m = -10.0;
    for _ in 0..n {
        m = 0.97 * m + 0.03 * -10.0 + 1.5 * r.normal();
        mobility.push(m);
    }

    let mut r = rng(3);
    let mut tests = Vec::with_capacity(n);
    let mut t = 20_000.0f64;
    for _ in 0..n {
        t = (0.95 * t + 0.05 * 20_000.0 + 400.0 * r.normal()).max(1000.0);
        tests.push(t.round());
    }

    let mut r = rng(4);
    let mut temperature = Vec::with_capacity(n);
    let mut wind = Vec::with_capacity(n);
    let mut humidity = Vec::with_capacity(n);
    for i in 0..n {
        let season = (2.0 * std::f64::consts::PI * i as f64 / 365.0).sin();
        temperature.push(15.0 + 10.0 * season + 2.0 * r.normal());
        wind.push((4.0 + 1.5 * r.normal()).abs());
        humidity.push((60.0 + 10.0 * r.normal()).clamp(5.0, 100.0));
    }

    let mut r = rng(5);
    let dates: Vec<NaiveDate> = (0..n as u64).map(|i| cfg.start + Days::new(i)).collect();
    let mean = |i: usize| {
        cfg.base_cases.ln() + cfg.stay_effect.ln() * stay[i] + 0.01 * mobility[i]
    };
    let mut level = mean(0);
    let mut cases = Vec::with_capacity(n);
    let mut revenue = Vec::with_capacity(n);
    for i in 0..n {
        level = cfg.phi * level + (1.0 - cfg.phi) * mean(i) + cfg.latent_sd * r.normal();
        let weekly = WEEKLY_FACTORS[day_of_week(dates[i])];
        cases.push((level.exp() * weekly * (cfg.obs_sd * r.normal()).exp()).round());
        revenue.push(
            -0.05 + cfg.revenue_stay_slope * stay[i] - 0.01 * work[i] - 0.005 * gather[i]
                + 0.002 * (mobility[i] + 10.0)
                + 0.005 * r.normal(),
        );
    }

    let mut frame = SeriesFrame::new(region_id, dates).expect("dates are increasing");
    for (name, values) in [
        ("new_cases", cases),
        ("tests", tests),
        ("temperature_c", temperature),
        ("wind_speed_ms", wind),
        ("humidity_pct", humidity),
        ("mobility_index", mobility),
        ("policy_stay_at_home", stay),
        ("policy_school_closing", school),
        ("policy_workplace_closing", work),
        ("policy_gatherings", gather),
        ("small_business_revenue_delta", revenue),
    ] {
        frame.add_dense_column(name, values).expect("lengths match");
    }
    frame
}

/// Noise-free fixture: cases grow linearly, every other input is constant.
pub fn linear_trend(region_id: &str, n_days: usize, start: NaiveDate, intercept: f64, slope: f64) -> SeriesFrame {
    let dates: Vec<NaiveDate> = (0..n_days as u64).map(|i| start + Days::new(i)).collect();
    let mut frame = SeriesFrame::new(region_id, dates).expect("dates are increasing");
    let constant = |v: f64| vec![v; n_days];
    let cases = (0..n_days).map(|i| intercept + slope * i as f64).collect();
    let revenue = (0..n_days).map(|i| -0.01 - 0.0001 * i as f64).collect();
    for (name, values) in [
        ("new_cases", cases),
        ("tests", constant(10_000.0)),
        ("temperature_c", constant(18.0)),
        ("wind_speed_ms", constant(3.0)),
        ("humidity_pct", constant(55.0)),
        ("mobility_index", constant(-5.0)),
        ("policy_stay_at_home", constant(1.0)),
        ("policy_school_closing", constant(1.0)),
        ("policy_workplace_closing", constant(1.0)),
        ("policy_gatherings", constant(2.0)),
        ("small_business_revenue_delta", revenue),
    ] {
        frame.add_dense_column(name, values).expect("lengths match");
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate;

    #[test]
    fn generator_is_valid_and_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate("XX", &cfg);
        assert_eq!(a, generate("XX", &cfg));
        let report = validate(&a);
        assert!(report.ok, "{report:?}");
        assert_eq!(a.len(), 240);
        let other = generate("XX", &SynthConfig { seed: 8, ..cfg });
        assert_ne!(a.dense("new_cases").unwrap(), other.dense("new_cases").unwrap());
    }

    #[test]
    fn policies_change_and_stay_in_range() {
        let f = generate("XX", &SynthConfig::default());
        let stay = f.dense("policy_stay_at_home").unwrap();
        assert!(stay.windows(2).any(|w| w[0] != w[1]));
        assert!(stay.iter().all(|v| (0.0..=3.0).contains(v) && v.fract() == 0.0));
    }

    #[test]
    fn linear_trend_fixture() {
        let f = linear_trend("LT", 50, NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), 100.0, 5.0);
        let c = f.dense("new_cases").unwrap();
        assert_eq!(c[0], 100.0);
        assert_eq!(c[49], 345.0);
        assert!(validate(&f).ok);
    }
}
