//! `sleeve plant-demo`: closed-loop step response of the display.

use std::path::Path;

use serde::Serialize;
use sleeve_core::control::track;
use sleeve_core::plant::{write_trace_csv, Plant, PlantState, TraceRow};
use sleeve_core::{Pressure, Seed};

use crate::config::Config;
use crate::error::CliError;

/// Half-width of the band counted as "on setpoint", psi.
pub const BAND_PSI: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantDemoSummary {
    pub setpoint_psi: f64,
    pub duration_s: f64,
    pub noiseless: bool,
    /// First time the measured pressure came within the band.
    pub band_entry_s: Option<f64>,
    pub exits_band: bool,
    pub final_true_psi: f64,
    pub max_true_psi: f64,
    pub fault_s: Option<f64>,
    pub rows: usize,
}

/// Tracks `setpoint_psi` from rest and returns the trace rows and a summary.
pub fn run_plant_demo(
    config: &Config,
    setpoint_psi: f64,
    duration: f64,
    noiseless: bool,
    seed: u64,
) -> Result<(Vec<TraceRow>, PlantDemoSummary), CliError> {
    let setpoint = Pressure::try_psi(setpoint_psi).map_err(|e| CliError::from(e).context("--setpoint"))?;
    let (_, ctrl) = config.session.control.into_parts()?;
    let params = if noiseless {
        config.session.plant.noiseless()
    } else {
        config.session.plant
    };
    let mut plant = Plant::new(params, PlantState::at_rest(ctrl.safety_clamp), Seed(seed))?;
    let trace = track(&mut plant, setpoint, duration, &ctrl)?;
    let rows: Vec<TraceRow> = trace
        .samples
        .iter()
        .map(|s| TraceRow {
            time_s: s.time,
            true_psi: s.true_pressure.as_psi(),
            measured_psi: s.measured.as_psi(),
            fill: s.valves.fill_open,
            vent: s.valves.vent_open,
            ruptured: s.ruptured,
        })
        .collect();
    let summary = PlantDemoSummary {
        setpoint_psi,
        duration_s: duration,
        noiseless,
        band_entry_s: trace.band_entry(BAND_PSI),
        exits_band: trace.exits_after_entry(BAND_PSI),
        final_true_psi: plant.state().pressure().as_psi(),
        max_true_psi: rows.iter().map(|r| r.true_psi).fold(0.0, f64::max),
        fault_s: trace.fault,
        rows: rows.len(),
    };
    Ok((rows, summary))
}

pub fn write_trace(rows: &[TraceRow], path: &Path) -> Result<(), CliError> {
    write_trace_csv(rows, std::io::BufWriter::new(std::fs::File::create(path)?))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_step_settles_in_band() {
        let (rows, s) = run_plant_demo(&Config::default(), 2.0, 5.0, true, 0).unwrap();
        assert_eq!(rows.len(), 500);
        assert!(s.band_entry_s.unwrap() <= 0.95);
        assert!(!s.exits_band);
        assert!(s.max_true_psi < 3.5);
        assert!(s.fault_s.is_none());
    }

    #[test]
    fn bad_setpoint_is_rejected() {
        assert!(run_plant_demo(&Config::default(), f64::NAN, 5.0, true, 0).is_err());
        assert!(run_plant_demo(&Config::default(), 2.0, 0.0, true, 0).is_err());
    }
}
