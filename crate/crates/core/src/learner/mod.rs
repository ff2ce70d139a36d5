//! Ensemble behavior cloning from demonstrations.
//!
//! A learner maps a pose `(x, y, s)` to a planar velocity command. Several
//! small networks are trained from independent initializations, and their
//! disagreement at a pose serves as the learner's uncertainty there.

mod data;
mod ensemble;
mod mlp;

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use data::{make_training_set, Action, DemoSample, Demonstration, SampleSource, TimedPose, TrainingSet};
pub use ensemble::{improvement, train, Checkpoint, Ensemble, EnsembleConfig, Standardizer};
pub use mlp::{Adam, Dense, Mlp};

use crate::error::Result;
use crate::session::task::{SegmentId, Task};
use crate::types::{streams, Pose, Seed};

/// Rate at which scripted and expert demonstrations sample the pose, Hz.
pub const DEMO_RATE_HZ: f64 = 20.0;

/// Number of expert demonstrations behind an initial learner.
pub const EXPERT_DEMOS: usize = 5;

/// Simulated expert runs over the whole task.
///
/// Each run takes 9-11 s and rides a constant sideways offset of a few
/// millimetres off the nominal path, so the demonstrations are similar but
/// not identical.
pub fn expert_demos(task: &Task, n: usize, seed: Seed) -> Result<Vec<Demonstration>> {
    let mut rng = seed.derive(streams::DEMOS).rng();
    let offset = Normal::new(0.0, 0.01).expect("positive sd");
    (0..n)
        .map(|_| {
            let duration: f64 = rng.gen_range(9.0..11.0);
            let lateral: f64 = offset.sample(&mut rng);
            let count = (duration * DEMO_RATE_HZ).round() as usize + 1;
            let poses: Vec<TimedPose> = (0..count)
                .map(|i| {
                    let s = i as f64 / (count - 1) as f64;
                    TimedPose {
                        t: i as f64 / DEMO_RATE_HZ,
                        pose: offset_pose(task, s, lateral),
                    }
                })
                .collect();
            Demonstration::from_poses(&poses)
        })
        .collect()
}

/// Pose at `s` displaced by `lateral` along the path's left normal.
fn offset_pose(task: &Task, s: f64, lateral: f64) -> Pose {
    let h = 1e-4;
    let a = task.point_at((s - h).max(0.0));
    let b = task.point_at((s + h).min(1.0));
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let norm = (dx * dx + dy * dy).sqrt();
    let p = task.point_at(s);
    if norm > 0.0 {
        Pose {
            position: [p[0] - lateral * dy / norm, p[1] + lateral * dx / norm],
            path_parameter: s,
        }
    } else {
        task.pose_at(s)
    }
}

/// Initial learner: expert demonstrations with the task's withheld segment removed.
pub fn bootstrap(task: &Task, config: &EnsembleConfig, seed: Seed) -> Result<(Ensemble, TrainingSet)> {
    let demos = expert_demos(task, EXPERT_DEMOS, seed)?;
    let removed: BTreeSet<SegmentId> = task.withheld().into_iter().collect();
    let data = make_training_set(&demos, &removed, task)?;
    let ensemble = train(&data, config, seed)?;
    Ok((ensemble, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::task::bundled;

    fn quick() -> EnsembleConfig {
        EnsembleConfig {
            epochs: 400,
            finetune_epochs: 200,
            ..EnsembleConfig::default()
        }
    }

    fn constant_set(c: [f64; 2]) -> TrainingSet {
        let task = bundled::cleaning();
        let mut set = TrainingSet::default();
        for pose in task.sweep(60) {
            set.pairs.push((pose, c));
        }
        set
    }

    #[test]
    fn expert_demos_are_seeded_and_plausible() {
        let task = bundled::cleaning();
        let a = expert_demos(&task, 5, Seed(3)).unwrap();
        let b = expert_demos(&task, 5, Seed(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        for d in &a {
            assert!((9.0..=11.05).contains(&d.teaching_time()));
            assert_eq!(d.samples()[0].pose.path_parameter, 0.0);
            assert_eq!(d.samples().last().unwrap().pose.path_parameter, 1.0);
        }
    }

    #[test]
    fn constant_action_is_learned_without_disagreement() {
        let c = [0.3, -0.2];
        let set = constant_set(c);
        let e = train(&set, &EnsembleConfig::default(), Seed(11)).unwrap();
        let norm = (c[0] * c[0] + c[1] * c[1]).sqrt();
        for m in 0..e.members().len() {
            let mean_err = set
                .pairs
                .iter()
                .map(|(pose, _)| {
                    let p = e.predictions(pose)[m];
                    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
                })
                .sum::<f64>()
                / set.len() as f64;
            assert!(mean_err < 0.01 * norm, "member {m}: mean error {mean_err}");
        }
        for (pose, _) in &set.pairs {
            assert!(e.raw_disagreement(pose) < 0.01 * norm);
        }
    }

    #[test]
    fn linear_map_generalizes() {
        let mut rng = Seed(21).rng();
        let a = [[0.8, -0.5, 0.3], [0.2, 0.6, -0.9]];
        let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
            let mut set = TrainingSet::default();
            for _ in 0..n {
                let pose = Pose {
                    position: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    path_parameter: rng.gen_range(0.0..1.0),
                };
                let f = pose.features();
                let act = [0, 1].map(|r| (0..3).map(|c| a[r][c] * f[c]).sum::<f64>());
                set.pairs.push((pose, act));
            }
            set
        };
        let train_set = make(&mut rng, 500);
        let held = make(&mut rng, 200);
        let e = train(&train_set, &quick(), Seed(5)).unwrap();
        let (mut mse, mut var) = (0.0, 0.0);
        let mean: [f64; 2] = [0, 1].map(|d| held.pairs.iter().map(|(_, y)| y[d]).sum::<f64>() / held.len() as f64);
        for (pose, y) in &held.pairs {
            let p = e.mean_action(pose);
            for d in 0..2 {
                mse += (p[d] - y[d]).powi(2);
                var += (y[d] - mean[d]).powi(2);
            }
        }
        assert!(mse < 0.05 * var, "mse {mse} var {var}");
    }

    #[test]
    fn shared_initialization_never_disagrees() {
        let task = bundled::cleaning();
        let (e, _) = bootstrap(
            &task,
            &EnsembleConfig {
                shared_init: true,
                ..quick()
            },
            Seed(2),
        )
        .unwrap();
        for pose in task.sweep(50) {
            assert_eq!(e.raw_disagreement(&pose), 0.0);
            assert_eq!(e.uncertainty(&pose).value(), 0.0);
        }
        assert!(matches!(
            improvement(&e, &e, &task.sweep(10)),
            Err(crate::Error::UndefinedImprovement)
        ));
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_round_trip() {
        let task = bundled::shelving();
        let (a, _) = bootstrap(&task, &quick(), Seed(8)).unwrap();
        let (b, _) = bootstrap(&task, &quick(), Seed(8)).unwrap();
        assert_eq!(a, b);
        let probe = task.sweep(200);
        assert_eq!(improvement(&a, &a, &probe).unwrap(), 0.0);
        for p in &probe {
            let u = a.uncertainty(p).value();
            assert!((0.0..=1.0).contains(&u));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ensemble.json");
        a.save_json(&path).unwrap();
        let back = Ensemble::load_json(&path).unwrap();
        assert_eq!(back, a);
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["hidden"], serde_json::json!([32]));
        assert!(raw["u_cal"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn empty_data_is_rejected() {
        assert!(matches!(
            train(&TrainingSet::default(), &quick(), Seed(1)),
            Err(crate::Error::EmptyTrainingSet)
        ));
    }
}
