//! Trajectory data model, JSON-lines I/O, centering and window construction.
//!
//! A dataset file starts with a meta record naming the state dimension and
//! the action count, followed by one trajectory object per line:
//!
//! ```text
//! {"type":"meta","state_dim":2,"num_actions":3}
//! {"id":"s01","cohort":"S21","pretest":0.4,"posttest":0.7,"steps":[{"t":0.0,"x":[0.1,0.2],"a":1}]}
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: trajectory '{id}' step {step}: {message}")]
    Step {
        line: usize,
        id: String,
        step: usize,
        message: String,
    },
    #[error("line {line}: trajectory '{id}': {message}")]
    Trajectory {
        line: usize,
        id: String,
        message: String,
    },
    #[error("duplicate trajectory id '{0}'")]
    DuplicateId(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// One demonstrated decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Elapsed time in seconds.
    pub t: f64,
    pub x: Vec<f64>,
    pub a: usize,
    /// Decision weight in (0, 1].
    #[serde(default = "unit_weight")]
    pub w: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub cohort: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretest: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posttest: Option<f64>,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub state_dim: usize,
    pub num_actions: usize,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    #[serde(rename = "type")]
    kind: String,
    state_dim: usize,
    num_actions: usize,
}

/// A stacked window of `omega` consecutive states ending at `t_index`,
/// oldest state first.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub owner: String,
    pub t_index: usize,
    pub values: Vec<f64>,
    /// Gap to the previous step; zero for the first window.
    pub dt: f64,
}

impl DatasetManifest {
    pub fn new(
        state_dim: usize,
        num_actions: usize,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self, DataError> {
        let manifest = Self {
            state_dim,
            num_actions,
            trajectories,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn get(&self, id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    /// Checks every invariant; line numbers in errors count the meta record
    /// as line 1.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.state_dim < 1 {
            return Err(DataError::Invalid("state_dim must be >= 1".into()));
        }
        if self.num_actions < 2 {
            return Err(DataError::Invalid("num_actions must be >= 2".into()));
        }
        let mut seen = HashSet::new();
        for (i, traj) in self.trajectories.iter().enumerate() {
            validate_trajectory(traj, self.state_dim, self.num_actions, i + 2)?;
            if !seen.insert(traj.id.as_str()) {
                return Err(DataError::DuplicateId(traj.id.clone()));
            }
        }
        Ok(())
    }

    /// Keeps the trajectories whose id satisfies `keep`, preserving order.
    pub fn filter<F: Fn(&Trajectory) -> bool>(&self, keep: F) -> Self {
        Self {
            state_dim: self.state_dim,
            num_actions: self.num_actions,
            trajectories: self
                .trajectories
                .iter()
                .filter(|t| keep(t))
                .cloned()
                .collect(),
        }
    }
}

fn validate_trajectory(
    traj: &Trajectory,
    m: usize,
    num_actions: usize,
    line: usize,
) -> Result<(), DataError> {
    let traj_err = |message: String| DataError::Trajectory {
        line,
        id: traj.id.clone(),
        message,
    };
    if traj.steps.is_empty() {
        return Err(traj_err("trajectory must have >=1 step".into()));
    }
    for (name, score) in [("pretest", traj.pretest), ("posttest", traj.posttest)] {
        if let Some(s) = score {
            if !(0.0..=1.0).contains(&s) {
                return Err(traj_err(format!("{name} {s} outside [0,1]")));
            }
        }
    }
    let mut prev_t = f64::NEG_INFINITY;
    for (k, step) in traj.steps.iter().enumerate() {
        let step_err = |message: String| DataError::Step {
            line,
            id: traj.id.clone(),
            step: k,
            message,
        };
        if step.x.len() != m {
            return Err(step_err(format!(
                "state vector has {} entries, expected {m}",
                step.x.len()
            )));
        }
        if step.x.iter().any(|v| !v.is_finite()) {
            return Err(step_err("state vector has non-finite entries".into()));
        }
        if step.a >= num_actions {
            return Err(step_err(format!(
                "action {} out of range [0, {})",
                step.a, num_actions
            )));
        }
        if !(step.w > 0.0 && step.w <= 1.0) {
            return Err(step_err(format!("weight {} outside (0,1]", step.w)));
        }
        if !step.t.is_finite() || step.t < 0.0 {
            return Err(step_err(format!("time {} must be finite and >= 0", step.t)));
        }
        if step.t <= prev_t {
            return Err(step_err(format!(
                "time {} not strictly increasing (previous {prev_t})",
                step.t
            )));
        }
        prev_t = step.t;
    }
    Ok(())
}

pub fn load_dataset<P: AsRef<Path>>(path: P) -> Result<DatasetManifest, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<DatasetManifest, DataError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (meta_line, meta_text) = lines.next().ok_or(DataError::Parse {
        line: 1,
        message: "missing meta record".into(),
    })?;
    let meta: MetaRecord = serde_json::from_str(meta_text).map_err(|e| DataError::Parse {
        line: meta_line,
        message: format!("bad meta record: {e}"),
    })?;
    if meta.kind != "meta" {
        return Err(DataError::Parse {
            line: meta_line,
            message: format!("first record must have type \"meta\", got {:?}", meta.kind),
        });
    }
    if meta.state_dim < 1 || meta.num_actions < 2 {
        return Err(DataError::Parse {
            line: meta_line,
            message: "meta requires state_dim >= 1 and num_actions >= 2".into(),
        });
    }
    let mut trajectories = Vec::new();
    let mut seen = HashSet::new();
    for (line, body) in lines {
        let traj: Trajectory = serde_json::from_str(body).map_err(|e| DataError::Parse {
            line,
            message: e.to_string(),
        })?;
        validate_trajectory(&traj, meta.state_dim, meta.num_actions, line)?;
        if !seen.insert(traj.id.clone()) {
            return Err(DataError::DuplicateId(traj.id));
        }
        trajectories.push(traj);
    }
    Ok(DatasetManifest {
        state_dim: meta.state_dim,
        num_actions: meta.num_actions,
        trajectories,
    })
}

/// Canonical serialization: shortest round-trip float formatting, weights
/// always written.
pub fn dataset_to_string(d: &DatasetManifest) -> String {
    let mut out = String::new();
    let meta = MetaRecord {
        kind: "meta".into(),
        state_dim: d.state_dim,
        num_actions: d.num_actions,
    };
    out.push_str(&serde_json::to_string(&meta).expect("meta serializes"));
    out.push('\n');
    for traj in &d.trajectories {
        out.push_str(&serde_json::to_string(traj).expect("trajectory serializes"));
        out.push('\n');
    }
    out
}

pub fn write_dataset<P: AsRef<Path>>(d: &DatasetManifest, path: P) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(dataset_to_string(d).as_bytes())
        .map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Per-dimension mean over every step of every trajectory.
pub fn state_mean(d: &DatasetManifest) -> Vec<f64> {
    let mut mean = vec![0.0; d.state_dim];
    let n = d.total_steps();
    if n == 0 {
        return mean;
    }
    for step in d.trajectories.iter().flat_map(|t| &t.steps) {
        for (acc, v) in mean.iter_mut().zip(&step.x) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    mean
}

/// Subtracts the global state mean; the mean is returned so the same shift
/// can be applied to held-out data.
pub fn center_states(d: &DatasetManifest) -> (DatasetManifest, Vec<f64>) {
    let mean = state_mean(d);
    let mut centered = d.clone();
    for traj in &mut centered.trajectories {
        apply_centering(traj, &mean);
    }
    (centered, mean)
}

pub fn apply_centering(traj: &mut Trajectory, mean: &[f64]) {
    for step in &mut traj.steps {
        for (v, mu) in step.x.iter_mut().zip(mean) {
            *v -= mu;
        }
    }
}

/// One window per step. Steps before `omega - 1` are left-padded with
/// copies of the first state.
pub fn windowize(traj: &Trajectory, omega: usize) -> Vec<Window> {
    assert!(omega >= 1, "window size must be >= 1");
    let m = traj.steps.first().map_or(0, |s| s.x.len());
    (0..traj.steps.len())
        .map(|t| {
            let mut values = Vec::with_capacity(m * omega);
            for lag in (0..omega).rev() {
                let idx = t.saturating_sub(lag);
                values.extend_from_slice(&traj.steps[idx].x);
            }
            let dt = if t == 0 {
                0.0
            } else {
                traj.steps[t].t - traj.steps[t - 1].t
            };
            Window {
                owner: traj.id.clone(),
                t_index: t,
                values,
                dt,
            }
        })
        .collect()
}

/// Median gap between consecutive steps over the whole dataset, or 1 when
/// no trajectory has two steps.
pub fn median_dt(d: &DatasetManifest) -> f64 {
    let mut gaps: Vec<f64> = d
        .trajectories
        .iter()
        .flat_map(|t| t.steps.windows(2).map(|p| p[1].t - p[0].t))
        .collect();
    if gaps.is_empty() {
        return 1.0;
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    if n % 2 == 1 {
        gaps[n / 2]
    } else {
        0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
    }
}
