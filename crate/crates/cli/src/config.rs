//! Experiment configuration from flags or a JSON file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    FullerSynthesize,
    TvPath,
    TruncationRate,
    ZenoRate,
    CorollaryCheck,
}

impl Experiment {
    pub fn id(self) -> &'static str {
        match self {
            Experiment::FullerSynthesize => "fuller-synthesize",
            Experiment::TvPath => "tv-path",
            Experiment::TruncationRate => "truncation-rate",
            Experiment::ZenoRate => "zeno-rate",
            Experiment::CorollaryCheck => "corollary-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HybridModel {
    WaterTank,
    BouncingBall,
}

impl FromStr for HybridModel {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "water-tank" => Ok(HybridModel::WaterTank),
            "bouncing-ball" => Ok(HybridModel::BouncingBall),
            other => Err(LabError::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Parameters of the built-in hybrid models; unused fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub inflow: f64,
    pub outflow: [f64; 2],
    pub thresholds: [f64; 2],
    pub gravity: f64,
    pub restitution: f64,
    pub initial_state: Option<[f64; 2]>,
    pub initial_mode: usize,
    /// Constant running cost per mode; `None` picks the model default.
    pub mode_costs: Option<Vec<f64>>,
    pub max_events: usize,
    pub step: f64,
    pub window: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            inflow: 0.75,
            outflow: [0.5, 0.5],
            thresholds: [0.0, 0.0],
            gravity: 1.0,
            restitution: 0.5,
            initial_state: None,
            initial_mode: 0,
            mode_costs: None,
            max_events: 25,
            step: 1e-3,
            window: 6,
        }
    }
}

/// A fully resolved run description; echoed verbatim in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_x0")]
    pub x0: [f64; 2],
    /// `None` selects the experiment default; an explicit empty grid is an error.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    #[serde(default = "default_model")]
    pub model: HybridModel,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub timing: bool,
}

fn default_x0() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_model() -> HybridModel {
    HybridModel::WaterTank
}

fn default_tol() -> f64 {
    1e-10
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            x0: default_x0(),
            eps: None,
            eta: None,
            n: None,
            model: default_model(),
            params: ModelParams::default(),
            tol: default_tol(),
            seed: 0,
            out: default_out(),
            timing: false,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }

    /// Fills experiment defaults, canonicalizes grid order and validates.
    pub fn resolve(mut self) -> Result<Self, LabError> {
        match self.experiment {
            Experiment::TvPath | Experiment::CorollaryCheck if self.eps.is_none() => {
                self.eps = Some(parse_f64_grid("1e-1:1e-6:decade")?);
            }
            Experiment::TruncationRate if self.eta.is_none() => {
                self.eta = Some(parse_f64_grid("1e0:1e-3:1-2-5")?);
            }
            Experiment::ZenoRate if self.n.is_none() => {
                self.n = Some((2..=12).collect());
            }
            _ => {}
        }
        if let Some(g) = &mut self.eps {
            g.sort_by(|a, b| b.total_cmp(a));
        }
        if let Some(g) = &mut self.eta {
            g.sort_by(|a, b| b.total_cmp(a));
        }
        if let Some(g) = &mut self.n {
            g.sort_unstable();
        }
        self.validate()?;
        Ok(self)
    }

    /// ε grid, descending.
    pub fn eps(&self) -> &[f64] {
        self.eps.as_deref().unwrap_or_default()
    }

    /// η grid, descending.
    pub fn eta(&self) -> &[f64] {
        self.eta.as_deref().unwrap_or_default()
    }

    /// Truncation indices, ascending.
    pub fn n(&self) -> &[usize] {
        self.n.as_deref().unwrap_or_default()
    }

    fn validate(&self) -> Result<(), LabError> {
        let need = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(LabError::Config(msg.into()))
            }
        };
        need(self.x0.iter().all(|v| v.is_finite()), "x0 must be finite")?;
        need(
            self.tol > 0.0 && self.tol.is_finite(),
            "tol must be positive",
        )?;
        need(
            self.eps().iter().all(|e| *e > 0.0 && e.is_finite()),
            "eps values must be positive",
        )?;
        need(
            self.eta().iter().all(|e| *e > 0.0 && e.is_finite()),
            "eta values must be positive",
        )?;
        need(
            self.eps().windows(2).all(|w| w[0] != w[1]),
            "eps grid has duplicates",
        )?;
        need(
            self.eta().windows(2).all(|w| w[0] != w[1]),
            "eta grid has duplicates",
        )?;
        need(
            self.n().windows(2).all(|w| w[0] != w[1]),
            "n grid has duplicates",
        )?;
        match self.experiment {
            Experiment::TvPath | Experiment::CorollaryCheck => {
                need(!self.eps().is_empty(), "empty eps grid")
            }
            Experiment::TruncationRate => need(!self.eta().is_empty(), "empty eta grid"),
            Experiment::ZenoRate => {
                need(!self.n().is_empty(), "empty n grid")?;
                need(self.params.step > 0.0, "step must be positive")?;
                need(self.params.max_events > 0, "max_events must be positive")
            }
            Experiment::FullerSynthesize => Ok(()),
        }
    }
}

/// Parses `a,b,c` or a log range `start:stop:decade` / `start:stop:1-2-5`.
pub fn parse_f64_grid(text: &str) -> Result<Vec<f64>, LabError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [list] => list.split(',').map(parse_number).collect(),
        [start, stop, kind] => {
            let (a, b) = (parse_number(start)?, parse_number(stop)?);
            if !(a > 0.0 && b > 0.0) {
                return Err(LabError::Config(format!(
                    "log range `{text}` needs positive ends"
                )));
            }
            let mantissas: &[f64] = match *kind {
                "decade" => &[1.0],
                "1-2-5" => &[1.0, 2.0, 5.0],
                other => return Err(LabError::Config(format!("unknown range kind `{other}`"))),
            };
            let (lo, hi) = (a.min(b), a.max(b));
            let mut grid = Vec::new();
            let first = lo.log10().floor() as i32 - 1;
            let last = hi.log10().ceil() as i32 + 1;
            for e in first..=last {
                for m in mantissas {
                    let v: f64 = format!("{m}e{e}").parse().expect("formatted float parses");
                    if v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12) {
                        grid.push(v);
                    }
                }
            }
            Ok(grid)
        }
        _ => Err(LabError::Config(format!("cannot parse grid `{text}`"))),
    }
}

/// Parses `a,b,c` or an inclusive range `lo..hi` (also `lo:hi`).
pub fn parse_usize_grid(text: &str) -> Result<Vec<usize>, LabError> {
    let text = text.trim();
    let bad = || LabError::Config(format!("cannot parse count list `{text}`"));
    if let Some((lo, hi)) = text.split_once("..").or_else(|| text.split_once(':')) {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi
            .trim_start_matches('=')
            .trim()
            .parse()
            .map_err(|_| bad())?;
        return Ok((lo..=hi).collect());
    }
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

pub fn parse_point(text: &str) -> Result<[f64; 2], LabError> {
    let v: Vec<f64> = text
        .split(',')
        .map(parse_number)
        .collect::<Result<_, _>>()?;
    <[f64; 2]>::try_from(v)
        .map_err(|_| LabError::Config(format!("expected two components in `{text}`")))
}

fn parse_number(s: &str) -> Result<f64, LabError> {
    s.trim()
        .parse()
        .map_err(|_| LabError::Config(format!("`{s}` is not a number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decade_grid() {
        assert_eq!(
            parse_f64_grid("1e-1:1e-6:decade").unwrap(),
            vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1]
        );
        assert_eq!(parse_f64_grid("1:1e-2:1-2-5").unwrap().len(), 7);
        assert_eq!(parse_f64_grid("0.5, 0.25").unwrap(), vec![0.5, 0.25]);
        assert!(parse_f64_grid("1:2").is_err());
        assert!(parse_f64_grid("").unwrap().is_empty());
    }

    #[test]
    fn count_grids() {
        assert_eq!(parse_usize_grid("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_usize_grid("2:4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_usize_grid("3,1").unwrap(), vec![3, 1]);
        assert!(parse_usize_grid("x").is_err());
    }

    #[test]
    fn empty_eps_grid_is_rejected() {
        let mut c = ExperimentConfig::new(Experiment::TvPath);
        assert_eq!(c.clone().resolve().unwrap().eps().len(), 6);
        c.eps = Some(vec![]);
        assert!(matches!(c.resolve(), Err(LabError::Config(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::new(Experiment::ZenoRate)
            .resolve()
            .unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(c, back);
    }
}
