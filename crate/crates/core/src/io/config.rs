//! Declarative run configuration (TOML). Command-line flags override it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::network::CarpoolLine;

/// A line as `"B>V>S"` or as `["B", "V", "S"]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LineSpec {
    Text(String),
    Ids(Vec<String>),
}

impl LineSpec {
    pub fn to_line(&self) -> Result<CarpoolLine, crate::network::NetworkError> {
        match self {
            LineSpec::Text(s) => s.parse(),
            LineSpec::Ids(ids) => CarpoolLine::new(ids.iter().cloned()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterConfig {
    /// `straight-line` (default) or `http`.
    pub kind: Option<String>,
    /// Endpoint template; `ROUTER_URL` is used when absent.
    pub url: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub timeout_s: Option<u64>,
    pub coordinates_pointer: Option<String>,
    /// RFC 3339 departure instant passed to the router.
    pub departure: Option<String>,
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Target drivers per bin per day.
    pub flows: Option<Vec<f64>>,
    pub day_count: Option<u32>,
    /// First generated day, `YYYY-MM-DD`.
    pub first_day: Option<String>,
    pub noise_sigma_m: Option<f64>,
    pub sampling_period_s: Option<u32>,
    pub speed_mps: Option<f64>,
    /// Simulated passenger requests per bin and day.
    pub requests_per_bin: Option<u32>,
    pub willingness: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub traces: Option<PathBuf>,
    pub simplified: Option<PathBuf>,
    pub od: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub line: Option<LineSpec>,
    /// Operating window, `HH:MM-HH:MM` local time.
    pub window: Option<String>,
    /// Window for accepting meeting point arrivals; defaults to `window`.
    pub match_window: Option<String>,
    pub sub_windows: Option<Vec<String>>,
    /// `+HH:MM`; applies to every window.
    pub utc_offset: Option<String>,
    pub bin_minutes: Option<u32>,
    pub radius_m: Option<f64>,
    pub operating_days: Option<u32>,
    /// Days behind the traces; defaults to the number of distinct dates.
    pub days: Option<u32>,
    pub cut_height_m: Option<f64>,
    pub n_tilde: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub router: Option<RouterConfig>,
    pub scenario: Option<ScenarioConfig>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr; $($f:ident),*) => {
        Self { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl RouterConfig {
    pub fn over(self, lo: Self) -> Self {
        overlay!(self, lo; kind, url, cache_dir, timeout_s, coordinates_pointer, departure, max_in_flight)
    }
}

impl ScenarioConfig {
    pub fn over(self, lo: Self) -> Self {
        overlay!(self, lo; flows, day_count, first_day, noise_sigma_m, sampling_period_s,
            speed_mps, requests_per_bin, willingness)
    }
}

impl Config {
    pub fn parse(text: &str, source: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Parse {
            file: source.to_string(),
            line: e.span().map_or(0, |s| text[..s.start].bytes().filter(|&b| b == b'\n').count() as u64 + 1),
            message: e.message().to_string(),
        })
    }

    /// Reads a config file; relative paths in it are taken from the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        let cfg = Self::parse(&text, &path.display().to_string())?;
        Ok(cfg.relative_to(path.parent().unwrap_or_else(|| Path::new("."))))
    }

    fn relative_to(mut self, base: &Path) -> Self {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        for p in [
            &mut self.nodes,
            &mut self.edges,
            &mut self.traces,
            &mut self.simplified,
            &mut self.od,
            &mut self.labels,
            &mut self.output_dir,
        ] {
            fix(p);
        }
        if let Some(r) = self.router.as_mut() {
            fix(&mut r.cache_dir);
        }
        self
    }

    /// Fields set in `self` win over those in `lo`.
    pub fn over(mut self, mut lo: Self) -> Self {
        let router = match (self.router.take(), lo.router.take()) {
            (Some(a), Some(b)) => Some(a.over(b)),
            (a, b) => a.or(b),
        };
        let scenario = match (self.scenario.take(), lo.scenario.take()) {
            (Some(a), Some(b)) => Some(a.over(b)),
            (a, b) => a.or(b),
        };
        let merged: Self = overlay!(self, lo; nodes, edges, traces, simplified, od, labels, line,
            window, match_window, sub_windows, utc_offset, bin_minutes, radius_m, operating_days,
            days, cut_height_m, n_tilde, output_dir, seed, router, scenario);
        Self { router, scenario, ..merged }
    }
}
