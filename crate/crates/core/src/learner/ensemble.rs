use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::TrainingSet;
use super::mlp::{Adam, Mlp};
use crate::error::{Error, Result};
use crate::types::{clamp_uncertainty, streams, Pose, Seed, UncertaintyLevel};

const INPUTS: usize = 3;
const OUTPUTS: usize = 2;

/// Floor for the calibration scale so identical members map to zero, not NaN.
const MIN_CALIBRATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epochs of continued training when new demonstrations are appended.
    pub finetune_epochs: usize,
    /// Retrain from fresh initializations instead of fine-tuning.
    pub full_retrain: bool,
    /// Give every member the same initialization (they then never disagree).
    pub shared_init: bool,
    /// Quantile of training-pose disagreement used as the calibration anchor.
    pub calibration_quantile: f64,
    /// Raw disagreement equal to `gain x anchor` renders as 100%.
    pub calibration_gain: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: 5,
            hidden: vec![32],
            epochs: 1500,
            learning_rate: 0.01,
            finetune_epochs: 600,
            full_retrain: false,
            shared_init: false,
            calibration_quantile: 0.95,
            calibration_gain: 5.0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members < 2 {
            return Err(Error::invalid("an ensemble needs at least two members"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layers must be non-empty"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.calibration_quantile > 0.0 && self.calibration_quantile <= 1.0) {
            return Err(Error::invalid("calibration quantile must be in (0, 1]"));
        }
        if !(self.calibration_gain > 0.0) {
            return Err(Error::invalid("calibration gain must be positive"));
        }
        Ok(())
    }
}

/// Per-feature affine map to zero mean and unit spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> Self {
        let n = rows.clone().count().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-9 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Independently initialized behavior-cloning regressors from pose to action.
///
/// Uncertainty at a pose is the mean, over action dimensions, of the
/// members' prediction standard deviation, divided by the calibration scale
/// and clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    members: Vec<Mlp>,
    inputs: Standardizer,
    outputs: Standardizer,
    u_cal: f64,
    seed: Seed,
    config: EnsembleConfig,
}

fn to_matrices(data: &TrainingSet, inputs: &Standardizer, outputs: &Standardizer) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    data.pairs
        .iter()
        .map(|(pose, action)| (inputs.forward(&pose.features()), outputs.forward(action)))
        .unzip()
}

fn fit_member(mut net: Mlp, xs: &[Vec<f64>], ys: &[Vec<f64>], epochs: usize, lr: f64, member: usize) -> Result<Mlp> {
    let mut opt = Adam::new(net.param_count(), lr);
    let mut params = net.params();
    for epoch in 0..epochs {
        let (loss, grad) = net.loss_and_grad(xs, ys);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { member, epoch, loss });
        }
        opt.step(&mut params, &grad);
        net.set_params(&params);
    }
    let loss = net.loss(xs, ys);
    if !loss.is_finite() {
        return Err(Error::Divergence { member, epoch: epochs, loss });
    }
    Ok(net)
}

/// Trains every network on its own thread; results keep member order.
fn fit_all(nets: Vec<Mlp>, xs: &[Vec<f64>], ys: &[Vec<f64>], epochs: usize, lr: f64) -> Result<Vec<Mlp>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = nets
            .into_iter()
            .enumerate()
            .map(|(i, net)| scope.spawn(move || fit_member(net, xs, ys, epochs, lr, i)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("member training panicked"))
            .collect()
    })
}

/// Trains an ensemble on `data`; member `i` is initialized from a seed derived from `seed` and `i`.
pub fn train(data: &TrainingSet, config: &EnsembleConfig, seed: Seed) -> Result<Ensemble> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let features: Vec<[f64; 3]> = data.pairs.iter().map(|(p, _)| p.features()).collect();
    let inputs = Standardizer::fit(features.iter().map(|f| f.as_slice()), INPUTS);
    let outputs = Standardizer::fit(data.pairs.iter().map(|(_, a)| a.as_slice()), OUTPUTS);
    let (xs, ys) = to_matrices(data, &inputs, &outputs);

    let root = seed.derive(streams::ENSEMBLE);
    let nets: Vec<Mlp> = (0..config.members)
        .map(|i| {
            let member_seed = if config.shared_init { root } else { root.derive(i as u64) };
            Mlp::new(INPUTS, &config.hidden, OUTPUTS, &mut member_seed.rng())
        })
        .collect();
    let members = fit_all(nets, &xs, &ys, config.epochs, config.learning_rate)?;

    let mut ensemble = Ensemble {
        members,
        inputs,
        outputs,
        u_cal: 1.0,
        seed,
        config: config.clone(),
    };
    ensemble.u_cal = ensemble.calibration_for(data);
    Ok(ensemble)
}

impl Ensemble {
    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn u_cal(&self) -> f64 {
        self.u_cal
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    fn calibration_for(&self, data: &TrainingSet) -> f64 {
        let mut raw: Vec<f64> = data.pairs.iter().map(|(p, _)| self.raw_disagreement(p)).collect();
        raw.sort_by(f64::total_cmp);
        let idx = ((raw.len() as f64 * self.config.calibration_quantile).ceil() as usize)
            .clamp(1, raw.len())
            - 1;
        (raw[idx] * self.config.calibration_gain).max(MIN_CALIBRATION)
    }

    /// Each member's action prediction at `pose`, in action units.
    pub fn predictions(&self, pose: &Pose) -> Vec<[f64; 2]> {
        let x = self.inputs.forward(&pose.features());
        self.members
            .iter()
            .map(|m| {
                let y = self.outputs.inverse(&m.forward(&x));
                [y[0], y[1]]
            })
            .collect()
    }

    pub fn mean_action(&self, pose: &Pose) -> [f64; 2] {
        let preds = self.predictions(pose);
        let n = preds.len() as f64;
        let mut mean = [0.0; 2];
        for p in &preds {
            mean[0] += p[0] / n;
            mean[1] += p[1] / n;
        }
        mean
    }

    /// Mean over action dimensions of the member standard deviation.
    pub fn raw_disagreement(&self, pose: &Pose) -> f64 {
        let preds = self.predictions(pose);
        let n = preds.len() as f64;
        (0..OUTPUTS)
            .map(|d| {
                // shifted by the first member so identical predictions give exactly zero
                let shifted: Vec<f64> = preds.iter().map(|p| p[d] - preds[0][d]).collect();
                let mean = shifted.iter().sum::<f64>() / n;
                (shifted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
            })
            .sum::<f64>()
            / OUTPUTS as f64
    }

    pub fn uncertainty(&self, pose: &Pose) -> UncertaintyLevel {
        self.uncertainty_with(pose, self.u_cal)
    }

    /// Uncertainty under another ensemble's calibration scale.
    pub fn uncertainty_with(&self, pose: &Pose, u_cal: f64) -> UncertaintyLevel {
        clamp_uncertainty(self.raw_disagreement(pose) / u_cal).unwrap_or(UncertaintyLevel::MAX)
    }

    pub fn mean_uncertainty(&self, poses: &[Pose], u_cal: f64) -> f64 {
        poses
            .iter()
            .map(|p| self.uncertainty_with(p, u_cal).value())
            .sum::<f64>()
            / poses.len().max(1) as f64
    }

    /// Updates the ensemble on `data`, keeping this ensemble's calibration.
    ///
    /// By default members continue training from their current weights for
    /// `finetune_epochs` with the original standardization; with
    /// `full_retrain` they are retrained from fresh initializations.
    pub fn retrain(&self, data: &TrainingSet) -> Result<Ensemble> {
        if data.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if self.config.full_retrain {
            let mut fresh = train(data, &self.config, self.seed)?;
            fresh.u_cal = self.u_cal;
            return Ok(fresh);
        }
        let (xs, ys) = to_matrices(data, &self.inputs, &self.outputs);
        let members = fit_all(
            self.members.clone(),
            &xs,
            &ys,
            self.config.finetune_epochs,
            self.config.learning_rate,
        )?;
        Ok(Ensemble {
            members,
            ..self.clone()
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &Checkpoint::from(self))?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        ckpt.into_ensemble()
    }
}

/// Self-describing checkpoint: architecture, weights, calibration and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
    pub activation: String,
    pub u_cal: f64,
    pub seed: Seed,
    pub ensemble: Ensemble,
}

impl From<&Ensemble> for Checkpoint {
    fn from(e: &Ensemble) -> Self {
        Checkpoint {
            format: 1,
            inputs: INPUTS,
            hidden: e.members[0].hidden_sizes(),
            outputs: OUTPUTS,
            activation: "tanh".into(),
            u_cal: e.u_cal,
            seed: e.seed,
            ensemble: e.clone(),
        }
    }
}

impl Checkpoint {
    pub fn into_ensemble(self) -> Result<Ensemble> {
        if self.format != 1 {
            return Err(Error::invalid(format!("unsupported checkpoint format {}", self.format)));
        }
        let e = self.ensemble;
        let shape_ok = e.members.len() >= 2
            && e.members.iter().all(|m| {
                m.input_dim() == self.inputs && m.output_dim() == self.outputs && m.hidden_sizes() == self.hidden
            });
        if !shape_ok || !(e.u_cal > 0.0) {
            return Err(Error::invalid("checkpoint architecture is inconsistent"));
        }
        Ok(e)
    }
}

/// Percent drop in mean uncertainty over `probe`, both measured with `before`'s calibration.
pub fn improvement(before: &Ensemble, after: &Ensemble, probe: &[Pose]) -> Result<f64> {
    if probe.is_empty() {
        return Err(Error::invalid("improvement needs at least one probe pose"));
    }
    let u_cal = before.u_cal;
    let u_before = before.mean_uncertainty(probe, u_cal);
    if u_before == 0.0 {
        return Err(Error::UndefinedImprovement);
    }
    let u_after = after.mean_uncertainty(probe, u_cal);
    Ok(100.0 * (u_before - u_after) / u_before)
}
