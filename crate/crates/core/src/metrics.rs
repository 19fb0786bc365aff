//! Trial records, order-insensitive aggregation and log-scaling fits.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("insufficient data: need at least 3 distinct p_s values, got {0}")]
    InsufficientData(usize),
    #[error("no trials")]
    NoTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Phase1,
    Snowball,
    Lattice,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Phase1 => "phase1",
            Phase::Snowball => "snowball",
            Phase::Lattice => "lattice",
        })
    }
}

/// Outcome of one Monte Carlo trial. For failed trials `final_size` is the
/// largest surviving fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub trial_id: u64,
    pub phase: Phase,
    pub p_s: f64,
    pub strategy: String,
    pub steps: u64,
    pub final_size: u64,
    pub age_oldest: u64,
    pub max_error_weight: u64,
    pub z_measurements: u64,
    pub diameter: u64,
    pub success: bool,
    /// Entangling attempts made; not part of the CSV schema.
    pub eo_attempts: u64,
}

impl TrialReport {
    pub const CSV_HEADER: [&'static str; 11] = [
        "trial_id",
        "phase",
        "p_s",
        "strategy",
        "steps",
        "final_size",
        "age_oldest",
        "max_error_weight",
        "z_measurements",
        "diameter",
        "success",
    ];

    pub fn new(phase: Phase, p_s: f64, strategy: impl Into<String>) -> Self {
        TrialReport {
            trial_id: 0,
            phase,
            p_s,
            strategy: strategy.into(),
            steps: 0,
            final_size: 0,
            age_oldest: 0,
            max_error_weight: 0,
            z_measurements: 0,
            diameter: 0,
            success: false,
            eo_attempts: 0,
        }
    }

    pub fn csv_fields(&self) -> [String; 11] {
        [
            self.trial_id.to_string(),
            self.phase.to_string(),
            format_sig(self.p_s, 6),
            self.strategy.clone(),
            self.steps.to_string(),
            self.final_size.to_string(),
            self.age_oldest.to_string(),
            self.max_error_weight.to_string(),
            self.z_measurements.to_string(),
            self.diameter.to_string(),
            self.success.to_string(),
        ]
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if exp < -5 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, x);
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        format!("{}e{}", trim_zeros(mantissa), e)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

/// Least-squares fit of `metric = slope · log2(1/p_s) + intercept`.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit, MetricsError> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(MetricsError::InsufficientData(distinct.len()));
    }
    let xs: Vec<f64> = points.iter().map(|(p, _)| (1.0 / p).log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    Ok(ScalingFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// Distribution summary of one metric within one (phase, strategy, p_s)
/// group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub phase: Phase,
    pub strategy: String,
    pub p_s: f64,
    pub metric: &'static str,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryRow {
    pub const CSV_HEADER: [&'static str; 11] = [
        "phase", "strategy", "p_s", "metric", "count", "mean", "median", "q25", "q75", "min", "max",
    ];

    pub fn csv_fields(&self) -> [String; 11] {
        [
            self.phase.to_string(),
            self.strategy.clone(),
            format_sig(self.p_s, 6),
            self.metric.to_string(),
            self.count.to_string(),
            format_sig(self.mean, 6),
            format_sig(self.median, 6),
            format_sig(self.q25, 6),
            format_sig(self.q75, 6),
            format_sig(self.min, 6),
            format_sig(self.max, 6),
        ]
    }
}

pub const METRICS: [&str; 7] = [
    "steps",
    "final_size",
    "age_oldest",
    "max_error_weight",
    "z_measurements",
    "diameter",
    "success",
];

pub fn metric_value(r: &TrialReport, metric: &str) -> Option<f64> {
    Some(match metric {
        "steps" => r.steps as f64,
        "final_size" => r.final_size as f64,
        "age_oldest" => r.age_oldest as f64,
        "max_error_weight" => r.max_error_weight as f64,
        "z_measurements" => r.z_measurements as f64,
        "diameter" => r.diameter as f64,
        "success" => u8::from(r.success) as f64,
        _ => return None,
    })
}

/// Summaries per group and metric. Groups are ordered by phase, strategy and
/// p_s; values are sorted before summing, so the output does not depend on
/// the order of `reports`.
pub fn aggregate(reports: &[TrialReport]) -> Result<Vec<SummaryRow>, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::NoTrials);
    }
    let mut groups: Vec<(Phase, &str, f64)> = reports
        .iter()
        .map(|r| (r.phase, r.strategy.as_str(), r.p_s))
        .collect();
    let key_cmp = |a: &(Phase, &str, f64), b: &(Phase, &str, f64)| {
        a.0.cmp(&b.0)
            .then_with(|| a.1.cmp(b.1))
            .then_with(|| a.2.total_cmp(&b.2))
    };
    groups.sort_by(key_cmp);
    groups.dedup_by(|a, b| key_cmp(a, b) == Ordering::Equal);

    let mut out = Vec::new();
    for (phase, strategy, p_s) in groups {
        let members: Vec<&TrialReport> = reports
            .iter()
            .filter(|r| r.phase == phase && r.strategy == strategy && r.p_s.total_cmp(&p_s).is_eq())
            .collect();
        for metric in METRICS {
            let mut values: Vec<f64> = members
                .iter()
                .map(|r| metric_value(r, metric).expect("known metric"))
                .collect();
            values.sort_by(f64::total_cmp);
            out.push(SummaryRow {
                phase,
                strategy: strategy.to_string(),
                p_s,
                metric,
                count: values.len(),
                mean: values.iter().sum::<f64>() / values.len() as f64,
                median: quantile_sorted(&values, 0.5),
                q25: quantile_sorted(&values, 0.25),
                q75: quantile_sorted(&values, 0.75),
                min: values[0],
                max: values[values.len() - 1],
            });
        }
    }
    Ok(out)
}

/// Linear-interpolation quantile of already sorted, non-empty data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}
