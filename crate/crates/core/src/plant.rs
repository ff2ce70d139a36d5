//! Pneumatic display plant: a pressure-regulated supply gated by two on-off
//! solenoid valves, one filling the sleeve and one venting it.
//!
//! Pressure follows first-order dynamics toward the regulator (fill) or
//! toward atmosphere (vent), integrated with the exact exponential update so
//! results do not depend on step size. Exceeding the rupture limit latches a
//! fault after which the sleeve leaks down.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{streams, Pressure, Seed, RUPTURE_PSI};

pub const MAX_STEP_S: f64 = 0.1;

/// Inflation datum the default parameters are calibrated to: a 1.5 psi
/// supply reaches 95% in 0.86 s.
pub const RISE_SETPOINT_PSI: f64 = 1.5;
pub const RISE_FRACTION: f64 = 0.95;
pub const RISE_TIME_S: f64 = 0.86;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValveState {
    pub fill_open: bool,
    pub vent_open: bool,
}

impl ValveState {
    pub const CLOSED: ValveState = ValveState {
        fill_open: false,
        vent_open: false,
    };
    pub const FILL: ValveState = ValveState {
        fill_open: true,
        vent_open: false,
    };
    pub const VENT: ValveState = ValveState {
        fill_open: false,
        vent_open: true,
    };

    pub fn new(fill_open: bool, vent_open: bool) -> Result<Self> {
        let v = ValveState { fill_open, vent_open };
        v.check()?;
        Ok(v)
    }

    pub fn check(self) -> Result<()> {
        if self.fill_open && self.vent_open {
            Err(Error::ValveInterlock)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub tau_fill: f64,
    pub tau_vent: f64,
    pub sensor_noise_sd: f64,
    pub rupture_threshold: f64,
    /// Leak rate once the seals have torn, psi/s.
    pub leak_rate: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        calibrate(Pressure::psi(RISE_SETPOINT_PSI), RISE_FRACTION, RISE_TIME_S)
            .expect("default rise datum is valid")
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |what: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be positive, got {v}")))
            }
        };
        positive("tau_fill", self.tau_fill)?;
        positive("tau_vent", self.tau_vent)?;
        positive("rupture_threshold", self.rupture_threshold)?;
        if !(self.sensor_noise_sd >= 0.0) || !(self.leak_rate >= 0.0) {
            return Err(Error::invalid("sensor noise and leak rate must be non-negative"));
        }
        Ok(())
    }

    pub fn noiseless(mut self) -> Self {
        self.sensor_noise_sd = 0.0;
        self
    }
}

/// Fill time constant that reaches `fraction` of a step in `time` seconds.
///
/// The tau is independent of the setpoint for a first-order plant; vent
/// time constant mirrors fill, noise defaults to 0.01 psi and post-rupture
/// leak to 0.5 psi/s.
pub fn calibrate(_setpoint: Pressure, fraction: f64, time: f64) -> Result<PlantParams> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::OutOfRange {
            what: "rise fraction",
            value: fraction,
            min: 0.0,
            max: 1.0,
        });
    }
    if !(time > 0.0) || !time.is_finite() {
        return Err(Error::invalid(format!("rise time must be positive, got {time}")));
    }
    let tau = time / (1.0 / (1.0 - fraction)).ln();
    Ok(PlantParams {
        tau_fill: tau,
        tau_vent: tau,
        sensor_noise_sd: 0.01,
        rupture_threshold: RUPTURE_PSI,
        leak_rate: 0.5,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// True gauge pressure, psi.
    pub pressure: f64,
    pub regulator_setpoint: f64,
    pub ruptured: bool,
    pub time: f64,
}

impl PlantState {
    pub fn at_rest(regulator_setpoint: Pressure) -> Self {
        PlantState {
            pressure: 0.0,
            regulator_setpoint: regulator_setpoint.as_psi(),
            ruptured: false,
            time: 0.0,
        }
    }

    pub fn with_pressure(mut self, psi: f64) -> Self {
        self.pressure = psi;
        self
    }

    pub fn pressure(&self) -> Pressure {
        Pressure::psi(self.pressure)
    }
}

/// Advances the plant by `dt` seconds under `valves`.
///
/// Fill drives pressure toward the regulator with `tau_fill`, vent toward
/// zero with `tau_vent`; closed valves hold. After rupture the fill valve has
/// no effect and the sleeve leaks at `leak_rate` (plus venting if open).
pub fn step(params: &PlantParams, state: &PlantState, valves: ValveState, dt: f64) -> Result<PlantState> {
    valves.check()?;
    if !(dt > 0.0 && dt <= MAX_STEP_S) {
        return Err(Error::OutOfRange {
            what: "dt",
            value: dt,
            min: 0.0,
            max: MAX_STEP_S,
        });
    }
    let mut next = *state;
    next.time += dt;
    let p = state.pressure;

    if state.ruptured {
        let mut q = p;
        if valves.vent_open {
            q *= (-dt / params.tau_vent).exp();
        }
        next.pressure = (q - params.leak_rate * dt).max(0.0);
        return Ok(next);
    }

    next.pressure = if valves.fill_open {
        let sp = state.regulator_setpoint;
        sp + (p - sp) * (-dt / params.tau_fill).exp()
    } else if valves.vent_open {
        p * (-dt / params.tau_vent).exp()
    } else {
        p
    };
    if next.pressure > params.rupture_threshold {
        next.ruptured = true;
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureSample {
    pub time: f64,
    pub pressure: Pressure,
}

/// Noisy gauge reading of the true pressure, clamped at gauge zero.
pub fn read_sensor<R: Rng + ?Sized>(params: &PlantParams, state: &PlantState, rng: &mut R) -> PressureSample {
    let noise = if params.sensor_noise_sd > 0.0 {
        Normal::new(0.0, params.sensor_noise_sd)
            .expect("validated sd")
            .sample(rng)
    } else {
        0.0
    };
    PressureSample {
        time: state.time,
        pressure: Pressure::psi((state.pressure + noise).max(0.0)),
    }
}

/// A plant with its own sensor noise stream, owned by one control loop.
#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
    state: PlantState,
    sensor: ChaCha8Rng,
}

impl Plant {
    pub fn new(params: PlantParams, state: PlantState, seed: Seed) -> Result<Self> {
        params.validate()?;
        Ok(Plant {
            params,
            state,
            sensor: seed.derive(streams::SENSOR).rng(),
        })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn state(&self) -> PlantState {
        self.state
    }

    pub fn set_regulator(&mut self, setpoint: Pressure) {
        self.state.regulator_setpoint = setpoint.as_psi();
    }

    pub fn advance(&mut self, valves: ValveState, dt: f64) -> Result<PlantState> {
        self.state = step(&self.params, &self.state, valves, dt)?;
        Ok(self.state)
    }

    pub fn read(&mut self) -> PressureSample {
        read_sensor(&self.params, &self.state, &mut self.sensor)
    }
}

/// One row of the plant trace log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time_s: f64,
    pub true_psi: f64,
    pub measured_psi: f64,
    pub fill: bool,
    pub vent: bool,
    pub ruptured: bool,
}

/// Writes `time_s,true_psi,measured_psi,fill,vent,ruptured`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn integrate(params: &PlantParams, mut s: PlantState, valves: ValveState, dt: f64, until: f64) -> PlantState {
        let n = (until / dt).round() as usize;
        for _ in 0..n {
            s = step(params, &s, valves, dt).unwrap();
        }
        s
    }

    #[test]
    fn calibration_examples() {
        let p = calibrate(Pressure::psi(1.5), 0.95, 0.86).unwrap();
        assert!((p.tau_fill - 0.86 / 20f64.ln()).abs() < 1e-12);
        assert!((p.tau_fill - 0.2871).abs() < 1e-4);
        let p = calibrate(Pressure::psi(2.7), 1.0 - (-1.0f64).exp(), 1.0).unwrap();
        assert!((p.tau_fill - 1.0).abs() < 1e-12);
        let p = calibrate(Pressure::psi(2.7), 0.6321, 1.0).unwrap();
        assert!((p.tau_fill - 1.0).abs() < 1e-4);
        let p = calibrate(Pressure::psi(1.5), 0.95, 1.72).unwrap();
        assert!((p.tau_fill - 0.5742).abs() < 1e-4);
        assert!(calibrate(Pressure::psi(1.5), 1.0, 1.0).is_err());
        assert!(calibrate(Pressure::psi(1.5), 0.5, 0.0).is_err());
    }

    #[test]
    fn fill_reaches_ninety_five_percent_at_rise_time() {
        let params = PlantParams::default();
        let s = integrate(&params, PlantState::at_rest(Pressure::psi(1.5)), ValveState::FILL, 0.01, 0.86);
        assert!(s.pressure >= 1.425 - 1e-9, "p = {}", s.pressure);
        assert!(s.pressure < 1.5);
    }

    #[test]
    fn sealed_volume_holds() {
        let params = PlantParams::default();
        let s0 = PlantState::at_rest(Pressure::psi(1.0)).with_pressure(2.0);
        for dt in [0.001, 0.05, 0.1] {
            let s = step(&params, &s0, ValveState::CLOSED, dt).unwrap();
            assert_eq!(s.pressure, 2.0);
        }
    }

    #[test]
    fn rupture_crossing_matches_closed_form() {
        let params = PlantParams::default();
        let mut s = PlantState::at_rest(Pressure::psi(5.0)).with_pressure(3.0);
        let dt = 0.001;
        while !s.ruptured {
            s = step(&params, &s, ValveState::FILL, dt).unwrap();
            assert!(s.time < 2.0);
        }
        let expected = params.tau_fill * (2.0f64 / 1.5).ln();
        assert!(s.time >= expected - 1e-9 && s.time <= expected + dt + 1e-9);

        // latched, decays monotonically whatever the valves do
        let mut last = s.pressure;
        for valves in [ValveState::FILL, ValveState::CLOSED, ValveState::VENT, ValveState::FILL] {
            for _ in 0..100 {
                s = step(&params, &s, valves, 0.01).unwrap();
                assert!(s.ruptured);
                assert!(s.pressure <= last);
                last = s.pressure;
            }
        }
        assert!(last < 3.0);
    }

    #[test]
    fn interlock_and_dt_guards() {
        let params = PlantParams::default();
        let s = PlantState::at_rest(Pressure::psi(2.0));
        let both = ValveState {
            fill_open: true,
            vent_open: true,
        };
        assert!(matches!(step(&params, &s, both, 0.01), Err(Error::ValveInterlock)));
        assert!(ValveState::new(true, true).is_err());
        assert!(step(&params, &s, ValveState::FILL, 0.0).is_err());
        assert!(step(&params, &s, ValveState::FILL, 0.2).is_err());
    }

    #[test]
    fn noiseless_sensor_is_exact() {
        let params = PlantParams::default().noiseless();
        let s = PlantState::at_rest(Pressure::psi(2.0)).with_pressure(1.234);
        let mut rng = Seed(1).rng();
        assert_eq!(read_sensor(&params, &s, &mut rng).pressure.as_psi(), 1.234);
    }

    #[test]
    fn sensor_noise_statistics() {
        let params = PlantParams {
            sensor_noise_sd: 0.01,
            ..PlantParams::default()
        };
        let s = PlantState::at_rest(Pressure::psi(2.0)).with_pressure(2.0);
        let mut rng = Seed(99).rng();
        let xs: Vec<f64> = (0..10_000)
            .map(|_| read_sensor(&params, &s, &mut rng).pressure.as_psi())
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((mean - 2.0).abs() <= 0.001, "mean {mean}");
        assert!((sd - 0.01).abs() <= 0.001, "sd {sd}");
    }

    #[test]
    fn sensor_clamps_at_gauge_zero() {
        let params = PlantParams {
            sensor_noise_sd: 0.05,
            ..PlantParams::default()
        };
        let s = PlantState::at_rest(Pressure::psi(2.0)).with_pressure(0.005);
        let mut rng = Seed(3).rng();
        for _ in 0..5_000 {
            assert!(read_sensor(&params, &s, &mut rng).pressure.as_psi() >= 0.0);
        }
    }

    #[test]
    fn step_size_invariance() {
        let params = PlantParams::default();
        let s0 = PlantState::at_rest(Pressure::psi(3.0));
        let coarse = integrate(&params, s0, ValveState::FILL, 0.01, 5.0);
        let fine = integrate(&params, s0, ValveState::FILL, 0.001, 5.0);
        assert!((coarse.pressure - fine.pressure).abs() < 0.005 * 3.0);
        let a = integrate(&params, s0, ValveState::FILL, 0.01, 0.3);
        let b = integrate(&params, s0, ValveState::FILL, 0.001, 0.3);
        assert!((a.pressure - b.pressure).abs() < 1e-9);
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(
            &[TraceRow {
                time_s: 0.01,
                true_psi: 0.1,
                measured_psi: 0.11,
                fill: true,
                vent: false,
                ruptured: false,
            }],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "time_s,true_psi,measured_psi,fill,vent,ruptured");
    }

    proptest! {
        #[test]
        fn fill_is_monotone_without_overshoot(p in 0.0f64..2.9, sp in 0.1f64..3.0, dt in 1e-4f64..0.1) {
            prop_assume!(p < sp);
            let params = PlantParams::default();
            let mut s = PlantState::at_rest(Pressure::psi(sp)).with_pressure(p);
            for _ in 0..200 {
                let next = step(&params, &s, ValveState::FILL, dt).unwrap();
                prop_assert!(next.pressure <= sp + f64::EPSILON * sp);
                prop_assert!(next.pressure >= s.pressure);
                if s.pressure < sp - 1e-9 {
                    prop_assert!(next.pressure > s.pressure);
                }
                s = next;
            }
        }

        #[test]
        fn vent_is_monotone(p in 1e-3f64..3.5, dt in 1e-4f64..0.1) {
            let params = PlantParams::default();
            let s = PlantState::at_rest(Pressure::psi(2.0)).with_pressure(p);
            let next = step(&params, &s, ValveState::VENT, dt).unwrap();
            prop_assert!(next.pressure < p);
            prop_assert!(next.pressure >= 0.0);
        }

        #[test]
        fn closed_valves_conserve(p in 0.0f64..3.5, dt in 1e-4f64..0.1) {
            let params = PlantParams::default();
            let s = PlantState::at_rest(Pressure::psi(2.0)).with_pressure(p);
            prop_assert_eq!(step(&params, &s, ValveState::CLOSED, dt).unwrap().pressure, p);
        }
    }
}
