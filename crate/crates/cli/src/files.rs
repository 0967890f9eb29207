//! On-disk formats: system descriptions, net bundles and run manifests.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use nalgebra::DVector;
use neurobs::linalg::{from_rows, Mat};
use neurobs::nn::NeuralNet;
use serde::{Deserialize, Serialize};

/// Raised for unreadable or schema-violating inputs (exit code 1).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    parse_json(&text, path)
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        InputError(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())).into()
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Plant data for one of the certificate families.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B_w", default, skip_serializing_if = "Option::is_none")]
    pub b_w: Option<Vec<Vec<f64>>>,
    /// Order of an integrator chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

impl SystemFile {
    pub fn matrix(&self, name: &str) -> Result<Mat> {
        let rows = match name {
            "A" => &self.a,
            "B" => &self.b,
            "C" => &self.c,
            "B_w" => &self.b_w,
            _ => unreachable!("unknown matrix name"),
        };
        let rows = rows
            .as_ref()
            .ok_or_else(|| InputError(format!("system file lacks `{name}`")))?;
        Ok(from_rows(rows).map_err(|e| InputError(format!("`{name}`: {e}")))?)
    }

    pub fn order(&self) -> Result<usize> {
        match self.n {
            Some(n) if n > 0 => Ok(n),
            _ => Err(InputError("system file needs a positive chain order `n`".into()).into()),
        }
    }

    pub fn eps(&self) -> Result<f64> {
        match self.eps {
            Some(e) if e > 0.0 => Ok(e),
            _ => Err(InputError("system file needs a positive `eps`".into()).into()),
        }
    }
}

/// One net, or several with optional shared-net gains.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetBundle {
    Many {
        nets: Vec<NeuralNet>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gains: Option<Vec<f64>>,
    },
    One(NeuralNet),
}

impl NetBundle {
    pub fn nets(&self) -> Vec<&NeuralNet> {
        match self {
            NetBundle::One(n) => vec![n],
            NetBundle::Many { nets, .. } => nets.iter().collect(),
        }
    }

    pub fn gains(&self) -> Option<DVector<f64>> {
        match self {
            NetBundle::Many { gains: Some(g), .. } => Some(DVector::from_column_slice(g)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub output: PathBuf,
    pub tool_version: String,
    pub started_unix: u64,
    pub wall_clock_s: f64,
}

pub struct ManifestClock {
    started: Instant,
    started_unix: u64,
}

impl ManifestClock {
    pub fn start() -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { started: Instant::now(), started_unix }
    }

    pub fn finish(&self, command: &str, config_paths: &[&Path], seed: Option<u64>, output: &Path) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().collect(),
            config_paths: config_paths.iter().map(|p| p.to_path_buf()).collect(),
            seed,
            output: output.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started_unix,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        }
    }
}
