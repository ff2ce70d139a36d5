//! `sleeve session`: one headless teaching session.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sleeve_core::session::task::bundled;
use sleeve_core::session::{
    write_frames_csv, OracleTeacher, ReteachTarget, ScriptTeacher, SessionReport, Task, Teacher, ThresholdTeacher,
};
use sleeve_core::Seed;

use crate::config::Config;
use crate::error::CliError;

/// Where the demonstrations and the re-teach decision come from.
///
/// `oracle` re-teaches the withheld segment, `oracle:full` the whole task,
/// `oracle:<id>` a given segment; `script:<file>` replays a teacher script;
/// `feedback` re-teaches wherever the sleeve felt firm.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherChoice {
    Oracle(ReteachTarget),
    Script(PathBuf),
    Feedback,
}

impl FromStr for TeacherChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "oracle" => Ok(TeacherChoice::Oracle(ReteachTarget::Withheld)),
            None if s == "feedback" => Ok(TeacherChoice::Feedback),
            Some(("oracle", "full")) => Ok(TeacherChoice::Oracle(ReteachTarget::FullTask)),
            Some(("oracle", "withheld")) => Ok(TeacherChoice::Oracle(ReteachTarget::Withheld)),
            Some(("oracle", id)) => id
                .parse()
                .map(|id| TeacherChoice::Oracle(ReteachTarget::Segment(id)))
                .map_err(|_| format!("bad segment id {id:?}")),
            Some(("script", path)) if !path.is_empty() => Ok(TeacherChoice::Script(PathBuf::from(path))),
            _ => Err(format!(
                "unknown teacher {s:?}; expected oracle, oracle:full, oracle:<segment>, script:<file> or feedback"
            )),
        }
    }
}

impl fmt::Display for TeacherChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TeacherChoice::Oracle(ReteachTarget::Withheld) => f.write_str("oracle"),
            TeacherChoice::Oracle(ReteachTarget::FullTask) => f.write_str("oracle:full"),
            TeacherChoice::Oracle(ReteachTarget::Segment(id)) => write!(f, "oracle:{id}"),
            TeacherChoice::Script(p) => write!(f, "script:{}", p.display()),
            TeacherChoice::Feedback => f.write_str("feedback"),
        }
    }
}

impl TeacherChoice {
    pub fn build(&self) -> Result<Box<dyn Teacher>, CliError> {
        Ok(match self {
            TeacherChoice::Oracle(target) => Box::new(OracleTeacher::new(*target)),
            TeacherChoice::Feedback => Box::new(ThresholdTeacher::default()),
            TeacherChoice::Script(path) => {
                if !path.exists() {
                    return Err(CliError::new("not_found", format!("script file not found: {}", path.display())));
                }
                Box::new(ScriptTeacher::load(path).map_err(|e| CliError::from(e).context(path.display()))?)
            }
        })
    }
}

/// Loads a task file; `bundled:cleaning` and `bundled:shelving` name the built-in tasks.
pub fn load_task(path: &Path) -> Result<Task, CliError> {
    match path.to_str() {
        Some("bundled:cleaning") => return Ok(bundled::cleaning()),
        Some("bundled:shelving") => return Ok(bundled::shelving()),
        _ => {}
    }
    if !path.exists() {
        return Err(CliError::new("not_found", format!("task file not found: {}", path.display())));
    }
    Task::load(path).map_err(|e| CliError::from(e).context(path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionOutput {
    pub task: String,
    pub seed: u64,
    pub teacher: String,
    #[serde(flatten)]
    pub report: SessionReport,
}

/// Runs the protocol headless. With `out`, also writes `frames.csv`, the two
/// demonstrations as JSON lines, the retrained checkpoint and `report.json`.
pub fn run_session(
    task_path: &Path,
    config: &Config,
    teacher: &TeacherChoice,
    seed: u64,
    out: Option<&Path>,
) -> Result<SessionOutput, CliError> {
    let task = load_task(task_path)?;
    let mut t = teacher.build()?;
    let outcome = config.session.run(&task, t.as_mut(), Seed(seed))?;
    let mut output = SessionOutput {
        task: task.name.clone(),
        seed,
        teacher: teacher.to_string(),
        report: outcome.report,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let frames = dir.join("frames.csv");
        write_frames_csv(&output.report.frames, BufWriter::new(File::create(&frames)?))?;
        output.report.frames_csv = Some(frames.display().to_string());
        for (name, demo) in [("demo1.jsonl", &outcome.first_demo), ("demo2.jsonl", &outcome.second_demo)] {
            if let Some(d) = demo {
                d.write_jsonl(BufWriter::new(File::create(dir.join(name))?))?;
            }
        }
        if let Some(e) = &outcome.retrained {
            e.save_json(dir.join("ensemble.json"))?;
        }
        std::fs::write(dir.join("report.json"), to_json(&output)?)?;
    }
    Ok(output)
}

pub fn to_json(output: &SessionOutput) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(output)?)
}
