use serde::{Deserialize, Serialize};

use super::ledger::TallyPoint;
use super::schedule::same_pressure;
use crate::error::{Error, Result};
use crate::types::Pressure;

/// Search interval for the steepness factor, in 1/psi.
pub const K_MIN: f64 = 0.01;
pub const K_MAX: f64 = 100.0;

const SCAN_POINTS: usize = 257;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Logistic psychometric curve: percent of trials the test at `p` is judged higher.
pub fn psychometric(p: f64, reference: f64, k: f64) -> f64 {
    100.0 / (1.0 + (-k * (p - reference)).exp())
}

/// Sum of squared percentage residuals of `points` against the curve with steepness `k`.
pub fn residual(points: &[(f64, f64)], reference: f64, k: f64) -> f64 {
    points
        .iter()
        .map(|&(p, q)| {
            let r = q - psychometric(p, reference, k);
            r * r
        })
        .sum()
}

/// Least-squares logistic fit with the midpoint pinned at the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsychometricFit {
    pub k: f64,
    pub reference: Pressure,
    pub residual: f64,
    pub points: Vec<(Pressure, f64)>,
    /// The optimum sits on the upper steepness bound: the data are perfectly separable.
    pub saturated: bool,
}

impl PsychometricFit {
    pub fn model(&self, p: Pressure) -> f64 {
        psychometric(p.as_psi(), self.reference.as_psi(), self.k)
    }

    /// `(P, q_model)` samples from `lo` to `hi` inclusive at `step` psi.
    pub fn curve(&self, lo: f64, hi: f64, step: f64) -> Vec<(f64, f64)> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n)
            .map(|i| {
                let p = lo + i as f64 * step;
                (p, psychometric(p, self.reference.as_psi(), self.k))
            })
            .collect()
    }
}

pub fn points_from_tally(tally: &[TallyPoint]) -> Vec<(Pressure, f64)> {
    tally.iter().map(|t| (t.pressure, t.percent)).collect()
}

/// Fits the steepness `k` of the logistic curve centred on `reference`.
///
/// Minimizes the unweighted squared percentage residual over
/// `k ∈ [K_MIN, K_MAX]`. A log-spaced scan brackets the best basin and
/// golden-section search refines it. Perfectly separable data return
/// `K_MAX` with `saturated` set.
pub fn fit_sigmoid(points: &[(Pressure, f64)], reference: Pressure) -> Result<PsychometricFit> {
    for &(_, q) in points {
        if !(0.0..=100.0).contains(&q) {
            return Err(Error::OutOfRange {
                what: "observed percentage",
                value: q,
                min: 0.0,
                max: 100.0,
            });
        }
    }
    let mut distinct: Vec<f64> = points.iter().map(|(p, _)| p.as_psi()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if points.iter().all(|&(p, _)| same_pressure(p, reference)) {
        return Err(Error::NoInformation(
            "every point sits at the reference pressure".into(),
        ));
    }
    if distinct.len() < 2 {
        return Err(Error::NoInformation(
            "need at least two distinct test pressures".into(),
        ));
    }

    let raw: Vec<(f64, f64)> = points.iter().map(|&(p, q)| (p.as_psi(), q)).collect();
    let p0 = reference.as_psi();
    let cost = |k: f64| residual(&raw, p0, k);

    let k = minimize_on_bracket(cost);
    let saturated = K_MAX - k <= 1e-6;
    Ok(PsychometricFit {
        k,
        reference,
        residual: cost(k),
        points: points.to_vec(),
        saturated,
    })
}

fn scan_point(i: usize) -> f64 {
    let t = i as f64 / (SCAN_POINTS - 1) as f64;
    K_MIN * (K_MAX / K_MIN).powf(t)
}

fn minimize_on_bracket(cost: impl Fn(f64) -> f64) -> f64 {
    let (best, _) = (0..SCAN_POINTS)
        .map(|i| (i, cost(scan_point(i))))
        .fold((0, f64::INFINITY), |acc, (i, c)| if c < acc.1 { (i, c) } else { acc });
    let lo = scan_point(best.saturating_sub(1));
    let hi = scan_point((best + 1).min(SCAN_POINTS - 1));
    let k = golden_section(&cost, lo, hi, 1e-11);

    // Golden section never evaluates the bracket ends; check the search bounds.
    [K_MIN, K_MAX]
        .into_iter()
        .filter(|&b| b >= lo && b <= hi)
        .fold(k, |acc, b| if cost(b) <= cost(acc) { b } else { acc })
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (1.0 + c.abs().max(d.abs())) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Just-noticeable difference at the 75% point of a fitted curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JndReport {
    pub jnd: Pressure,
    pub p75: Pressure,
    /// JND as a percentage of the reference.
    pub weber_fraction: f64,
}

/// JND for steepness `k`: the curve reaches 75% at `reference + ln(3)/k`.
pub fn jnd_for(k: f64, reference: Pressure) -> Result<JndReport> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::NonPositiveSteepness(k));
    }
    let jnd = -(100.0_f64 / 75.0 - 1.0).ln() / k;
    Ok(JndReport {
        jnd: Pressure::psi(jnd),
        p75: Pressure::psi(reference.as_psi() + jnd),
        weber_fraction: 100.0 * jnd / reference.as_psi(),
    })
}

pub fn jnd(fit: &PsychometricFit) -> Result<JndReport> {
    jnd_for(fit.k, fit.reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub k: f64,
    pub jnd_psi: f64,
    pub weber_pct: f64,
}

impl CohortRow {
    fn from_k(k: f64, reference: Pressure) -> Result<Self> {
        let r = jnd_for(k, reference)?;
        Ok(CohortRow {
            k,
            jnd_psi: r.jnd.as_psi(),
            weber_pct: r.weber_fraction,
        })
    }
}

/// Per-subject rows with their mean, population standard deviation and a pooled refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub rows: Vec<CohortRow>,
    pub mean: CohortRow,
    pub std_dev: CohortRow,
    pub pooled: CohortRow,
    pub pooled_fit: PsychometricFit,
}

/// Summarizes per-subject fits; the pooled row refits every subject's points at once.
pub fn aggregate(fits: &[PsychometricFit], reference: Pressure) -> Result<CohortSummary> {
    if fits.is_empty() {
        return Err(Error::invalid("aggregate needs at least one fit"));
    }
    let rows = fits
        .iter()
        .map(|f| CohortRow::from_k(f.k, reference))
        .collect::<Result<Vec<_>>>()?;

    let column = |get: fn(&CohortRow) -> f64| -> (f64, f64) {
        let n = rows.len() as f64;
        let mean = rows.iter().map(get).sum::<f64>() / n;
        let var = rows.iter().map(|r| (get(r) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (k_mean, k_sd) = column(|r| r.k);
    let (j_mean, j_sd) = column(|r| r.jnd_psi);
    let (w_mean, w_sd) = column(|r| r.weber_pct);

    let all_points: Vec<(Pressure, f64)> = fits.iter().flat_map(|f| f.points.iter().copied()).collect();
    let pooled_fit = fit_sigmoid(&all_points, reference)?;
    Ok(CohortSummary {
        pooled: CohortRow::from_k(pooled_fit.k, reference)?,
        rows,
        mean: CohortRow {
            k: k_mean,
            jnd_psi: j_mean,
            weber_pct: w_mean,
        },
        std_dev: CohortRow {
            k: k_sd,
            jnd_psi: j_sd,
            weber_pct: w_sd,
        },
        pooled_fit,
    })
}
