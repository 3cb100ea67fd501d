//! Run configuration: a plain `key = value` file, overridable by flags.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ridge::PenaltyGrid;
use crate::scoring::ScoreConfig;

pub const DEFAULT_LAGS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// FIR lags; `None` falls back to [`DEFAULT_LAGS`] with a warning.
    pub k: Option<usize>,
    pub penalty_grid: PenaltyGrid,
    pub outer_folds_pooled: usize,
    pub outer_folds_subject: usize,
    pub inner_folds: usize,
    pub eps: f64,
    pub n_ceiling_splits: usize,
    pub seed: u64,
    /// Thread count; `None` uses every available core.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: None,
            penalty_grid: PenaltyGrid::default(),
            outer_folds_pooled: 20,
            outer_folds_subject: 5,
            inner_folds: 5,
            eps: 0.01,
            n_ceiling_splits: 20,
            seed: 0,
            workers: None,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Invalid(format!("config key {key}: cannot parse {value:?}")))
}

/// Either a comma-separated list, or `lo:hi:count` for `count` values
/// log-spaced from `10^lo` to `10^hi` inclusive.
pub fn parse_grid(value: &str) -> Result<PenaltyGrid> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        return PenaltyGrid::log_spaced(
            number("penalty_grid", parts[0])?,
            number("penalty_grid", parts[1])?,
            number("penalty_grid", parts[2])?,
        );
    }
    let values = value
        .split(',')
        .map(|v| number("penalty_grid", v.trim()))
        .collect::<Result<Vec<f64>>>()?;
    PenaltyGrid::new(values)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "k" => self.k = Some(number(key, value)?),
            "penalty_grid" => self.penalty_grid = parse_grid(value)?,
            "outer_folds_pooled" => self.outer_folds_pooled = number(key, value)?,
            "outer_folds_subject" => self.outer_folds_subject = number(key, value)?,
            "inner_folds" => self.inner_folds = number(key, value)?,
            "eps" => self.eps = number(key, value)?,
            "n_ceiling_splits" => self.n_ceiling_splits = number(key, value)?,
            "seed" => self.seed = number(key, value)?,
            "workers" => self.workers = Some(number(key, value)?),
            _ => return Err(Error::Invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a config file on top of `self`. Blank lines and `#` comments
    /// are ignored.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected key = value"))?;
            self.set(key.trim(), value).map_err(|e| Error::parse(i + 1, e))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == Some(0) {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        for (name, n) in [
            ("outer_folds_pooled", self.outer_folds_pooled),
            ("outer_folds_subject", self.outer_folds_subject),
            ("inner_folds", self.inner_folds),
        ] {
            if n < 2 {
                return Err(Error::Invalid(format!("{name} must be at least 2, got {n}")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if self.n_ceiling_splits == 0 {
            return Err(Error::Invalid("n_ceiling_splits must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lags(&self) -> usize {
        self.k.unwrap_or(DEFAULT_LAGS)
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            lags: self.lags(),
            grid: self.penalty_grid.clone(),
            outer_folds_pooled: self.outer_folds_pooled,
            outer_folds_subject: self.outer_folds_subject,
            inner_folds: self.inner_folds,
        }
    }

    /// Settings that affect results, for output sidecars. `workers` is left
    /// out so outputs do not depend on it.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let grid = self
            .penalty_grid
            .values()
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        [
            ("k", self.lags().to_string()),
            ("penalty_grid", grid),
            ("outer_folds_pooled", self.outer_folds_pooled.to_string()),
            ("outer_folds_subject", self.outer_folds_subject.to_string()),
            ("inner_folds", self.inner_folds.to_string()),
            ("eps", self.eps.to_string()),
            ("n_ceiling_splits", self.n_ceiling_splits.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Renders the config in the file format; `parse ∘ render` is the identity.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.echo() {
            if k == "k" && self.k.is_none() {
                continue;
            }
            out.push_str(&format!("{k} = {v}\n"));
        }
        if let Some(w) = self.workers {
            out.push_str(&format!("workers = {w}\n"));
        }
        out
    }
}
