//! Float formatting and the fixed CSV schemas.

use std::io::Write;

use mata_core::env::EpisodeMetrics;
use mata_core::marl::CoefficientRow;

use crate::error::Result;

pub const METRICS_HEADER: [&str; 6] = [
    "episode",
    "cumulative_reward",
    "timesteps",
    "total_distance",
    "tasks_completed",
    "total_waiting",
];

pub const COEFFICIENTS_HEADER: [&str; 7] = ["episode", "step", "alpha", "beta", "gen_loss", "disc_loss", "disc_accuracy"];

/// Shortest decimal form of `x` rounded to 9 significant digits.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn write_metrics_csv<W: Write>(episodes: &[EpisodeMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for (i, m) in episodes.iter().enumerate() {
        w.write_record([
            i.to_string(),
            sig9(m.cumulative_reward),
            m.timesteps.to_string(),
            sig9(m.total_distance),
            m.tasks_completed.to_string(),
            sig9(m.total_waiting()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coefficients_csv<W: Write>(rows: &[CoefficientRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COEFFICIENTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.step.to_string(),
            sig9(r.alpha),
            sig9(r.beta),
            sig9(r.gen_loss),
            sig9(r.disc_loss),
            sig9(r.disc_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}
