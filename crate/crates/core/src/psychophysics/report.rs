//! Fit reports and plot output.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::fit::{jnd, PsychometricFit};
use crate::error::Result;

/// Plot resolution for model curves, in psi.
pub const CURVE_STEP_PSI: f64 = 0.005;

/// One line of fit output: `{subject, k, jnd_psi, p75_psi, weber_pct, residual, saturated}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub subject: String,
    pub k: f64,
    pub jnd_psi: f64,
    pub p75_psi: f64,
    pub weber_pct: f64,
    pub residual: f64,
    pub saturated: bool,
}

impl FitReport {
    pub fn new(subject: impl Into<String>, fit: &PsychometricFit) -> Result<Self> {
        let j = jnd(fit)?;
        Ok(FitReport {
            subject: subject.into(),
            k: fit.k,
            jnd_psi: j.jnd.as_psi(),
            p75_psi: j.p75.as_psi(),
            weber_pct: j.weber_fraction,
            residual: fit.residual,
            saturated: fit.saturated,
        })
    }
}

/// Pressure span covering every fitted point, padded by a quarter psi.
fn span(fits: &[&PsychometricFit]) -> (f64, f64) {
    let (lo, hi) = fits
        .iter()
        .flat_map(|f| f.points.iter().map(|(p, _)| p.as_psi()))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
    if lo.is_finite() {
        ((lo - 0.25).max(0.0), hi + 0.25)
    } else {
        (0.0, 3.5)
    }
}

/// Writes `psi,q_model` samples of the fitted curve at [`CURVE_STEP_PSI`].
pub fn write_curve_csv<W: Write>(fit: &PsychometricFit, out: W) -> Result<()> {
    let (lo, hi) = span(&[fit]);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["psi", "q_model"])?;
    for (p, q) in fit.curve(lo, hi, CURVE_STEP_PSI) {
        w.write_record([format!("{p:.3}"), format!("{q:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `psi,q_observed` for the fitted points.
pub fn write_points_csv<W: Write>(fit: &PsychometricFit, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["psi", "q_observed"])?;
    for (p, q) in &fit.points {
        w.write_record([p.as_psi().to_string(), q.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// SVG with each subject's points and curve in grey and the pooled fit in orange.
pub fn render_svg(subjects: &[&PsychometricFit], pooled: Option<&PsychometricFit>) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 48.0;

    let mut all: Vec<&PsychometricFit> = subjects.to_vec();
    all.extend(pooled);
    let (lo, hi) = span(&all);
    let x = |p: f64| PAD + (p - lo) / (hi - lo) * (W - 2.0 * PAD);
    let y = |q: f64| H - PAD - q / 100.0 * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {top} V{bottom} H{right}" stroke="black" fill="none"/>"#,
        top = PAD,
        bottom = H - PAD,
        right = W - PAD
    );
    for q in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let _ = writeln!(
            svg,
            r#"<text x="{tx}" y="{ty:.1}" font-size="11" text-anchor="end">{q}</text>"#,
            tx = PAD - 6.0,
            ty = y(q) + 4.0
        );
    }
    let mut tick = (lo * 4.0).ceil() / 4.0;
    while tick <= hi + 1e-9 {
        let _ = writeln!(
            svg,
            r#"<text x="{tx:.1}" y="{ty}" font-size="11" text-anchor="middle">{tick:.2}</text>"#,
            tx = x(tick),
            ty = H - PAD + 16.0
        );
        tick += 0.25;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{cx}" y="{cy}" font-size="12" text-anchor="middle">test pressure (psi)</text>"#,
        cx = W / 2.0,
        cy = H - 10.0
    );

    let mut draw = |fit: &PsychometricFit, colour: &str, width: f64| {
        let path: Vec<String> = fit
            .curve(lo, hi, CURVE_STEP_PSI)
            .iter()
            .enumerate()
            .map(|(i, &(p, q))| format!("{}{:.2} {:.2}", if i == 0 { 'M' } else { 'L' }, x(p), y(q)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<path d="{}" stroke="{colour}" stroke-width="{width}" fill="none"/>"#,
            path.join(" ")
        );
        for (p, q) in &fit.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                x(p.as_psi()),
                y(*q)
            );
        }
    };
    for fit in subjects {
        draw(fit, "#999999", 1.0);
    }
    if let Some(fit) = pooled {
        draw(fit, "#e07b00", 2.5);
    }
    svg.push_str("</svg>\n");
    svg
}
