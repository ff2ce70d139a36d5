//! `sleeve fit`: psychometric fits from response files.
//!
//! Each input is either a trial ledger (`trial_id,first_psi,second_psi,chose_second`)
//! or a pre-tallied file (`psi,percent,trials`); the header decides which.
//! One subject per file, named after the file stem.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sleeve_core::psychophysics::report::{render_svg, write_curve_csv, write_points_csv, FitReport};
use sleeve_core::psychophysics::{
    aggregate, bias_report, fit_sigmoid, points_from_tally, read_tally_csv, tally, BiasSplit, CohortRow,
    PsychometricFit, ResponseLedger, TALLY_HEADER,
};
use sleeve_core::{Error, Pressure};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectReport {
    #[serde(flatten)]
    pub fit: FitReport,
    pub source: String,
    /// Interval preference on reference-vs-reference trials; ledgers only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<BiasSplit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOutput {
    pub reference_psi: f64,
    pub subjects: Vec<SubjectReport>,
    pub pooled: FitReport,
    pub mean: CohortRow,
    pub std_dev: CohortRow,
    /// Bias pooled over every ledger's reference pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<BiasSplit>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub files_written: Vec<String>,
}

struct Subject {
    name: String,
    source: String,
    fit: PsychometricFit,
    bias: Option<BiasSplit>,
}

fn subject_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "subject".into())
}

fn load_subject(path: &Path, reference: Pressure) -> Result<Subject, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("io", format!("cannot read {}: {e}", path.display())))?;
    let located = |e: Error| CliError::from(e).context(path.display());
    let header = text.lines().next().unwrap_or("").trim();
    if header.is_empty() {
        return Err(located(Error::NoInformation("empty trial list".into())));
    }
    let (points, bias) = if header.replace(' ', "") == TALLY_HEADER.join(",") {
        (read_tally_csv(text.as_bytes()).map_err(located)?, None)
    } else {
        let ledger = ResponseLedger::read_csv(text.as_bytes(), reference).map_err(located)?;
        if ledger.schedule().is_empty() {
            return Err(located(Error::NoInformation("empty trial list".into())));
        }
        (tally(&ledger).map_err(located)?, bias_report(&ledger).ok())
    };
    let fit = fit_sigmoid(&points_from_tally(&points), reference).map_err(located)?;
    Ok(Subject {
        name: subject_name(path),
        source: path.display().to_string(),
        fit,
        bias,
    })
}

/// Fits every file, pools them, and optionally writes curves and a plot to `out`.
pub fn run_fit(files: &[PathBuf], reference_psi: f64, out: Option<&Path>) -> Result<FitOutput, CliError> {
    if files.is_empty() {
        return Err(CliError::new("invalid_argument", "no input files"));
    }
    if !(reference_psi > 0.0 && reference_psi.is_finite()) {
        return Err(CliError::new("invalid_argument", format!("--ref must be a positive pressure, got {reference_psi}")));
    }
    let reference = Pressure::psi(reference_psi);
    let subjects = files
        .iter()
        .map(|f| load_subject(f, reference))
        .collect::<Result<Vec<_>, _>>()?;
    let fits: Vec<PsychometricFit> = subjects.iter().map(|s| s.fit.clone()).collect();
    let summary = aggregate(&fits, reference)?;
    let biases: Vec<BiasSplit> = subjects.iter().filter_map(|s| s.bias).collect();

    let mut output = FitOutput {
        reference_psi,
        subjects: subjects
            .iter()
            .map(|s| {
                Ok(SubjectReport {
                    fit: FitReport::new(&s.name, &s.fit)?,
                    source: s.source.clone(),
                    bias: s.bias,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?,
        pooled: FitReport::new("pooled", &summary.pooled_fit)?,
        mean: summary.mean,
        std_dev: summary.std_dev,
        bias: BiasSplit::pool(&biases).ok(),
        files_written: Vec::new(),
    };

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut create = |name: String| -> Result<BufWriter<File>, CliError> {
            let path = dir.join(name);
            written.push(path.display().to_string());
            Ok(BufWriter::new(File::create(&path)?))
        };
        for s in &subjects {
            write_curve_csv(&s.fit, create(format!("{}_curve.csv", s.name))?)?;
            write_points_csv(&s.fit, create(format!("{}_points.csv", s.name))?)?;
        }
        write_curve_csv(&summary.pooled_fit, create("pooled_curve.csv".into())?)?;
        let svg = render_svg(&fits.iter().collect::<Vec<_>>(), Some(&summary.pooled_fit));
        std::io::Write::write_all(&mut create("psychometric.svg".into())?, svg.as_bytes())?;
        let report_path = dir.join("report.json");
        written.push(report_path.display().to_string());
        output.files_written = written;
        std::fs::write(&report_path, serde_json::to_string_pretty(&output)?)?;
    }
    Ok(output)
}
