//! Run configuration and its flat `key = value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gdpa::GdpaConfig;
use crate::glmnn::GlmnnConfig;
use crate::glr::GlrConfig;
use crate::graph::TopologyMode;
use crate::ingest::SynthSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Objective {
    Glr,
    GlmnnOracle,
    GlmnnGdpa,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Glr => "glr",
            Objective::GlmnnOracle => "glmnn-oracle",
            Objective::GlmnnGdpa => "glmnn-gdpa",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "glr" => Ok(Objective::Glr),
            "glmnn-oracle" => Ok(Objective::GlmnnOracle),
            "glmnn-gdpa" => Ok(Objective::GlmnnGdpa),
            other => Err(Error::Validation(format!("unknown objective '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub objective: Objective,
    pub topology: TopologyMode,
    pub d_t: usize,
    pub d_v: usize,
    pub d_vt: usize,
    pub mu: f64,
    pub glr_step: f64,
    pub glr_max_iters: usize,
    pub glr_rel_tol: f64,
    pub rho: f64,
    pub gamma: f64,
    pub eps_trace: f64,
    pub gdpa_rel_tol: f64,
    pub gdpa_max_outer: usize,
    pub gdpa_max_sweeps: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub p_t: usize,
    pub p_v: usize,
    pub seed: u64,
    /// Odd `k` adds kNN baseline settings to a bench run.
    pub knn_k: Option<usize>,
    /// Bench sweeps; an empty list means "just the scalar value above".
    pub sweep_n_train: Vec<usize>,
    pub sweep_objective: Vec<Objective>,
    pub sweep_topology: Vec<TopologyMode>,
    /// Synthetic source used by `bench` when no data files are given.
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let glr = GlrConfig::default();
        let glmnn = GlmnnConfig::default();
        let gdpa = GdpaConfig::default();
        Self {
            objective: Objective::Glr,
            topology: TopologyMode::Sparse,
            d_t: 5,
            d_v: 5,
            d_vt: 10,
            mu: glr.mu,
            glr_step: glr.step,
            glr_max_iters: glr.max_iters,
            glr_rel_tol: glr.rel_tol,
            rho: glmnn.rho,
            gamma: glmnn.gamma,
            eps_trace: glmnn.eps_trace,
            gdpa_rel_tol: gdpa.rel_tol,
            gdpa_max_outer: gdpa.max_outer,
            gdpa_max_sweeps: gdpa.max_sweeps,
            n_train: 40,
            n_val: 40,
            p_t: 5,
            p_v: 5,
            seed: 0,
            knn_k: None,
            sweep_n_train: Vec::new(),
            sweep_objective: Vec::new(),
            sweep_topology: Vec::new(),
            synth: SynthSpec::default(),
        }
    }
}

fn parse_num<N: FromStr>(key: &str, value: &str) -> Result<N> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("bad value '{value}' for key '{key}'")))
}

fn parse_list<N: FromStr<Err = E>, E>(key: &str, value: &str, f: impl Fn(&str) -> std::result::Result<N, E>) -> Result<Vec<N>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).map_err(|_| Error::Validation(format!("bad list item '{s}' for key '{key}'"))))
        .collect()
}

impl RunConfig {
    pub fn glr(&self) -> GlrConfig {
        GlrConfig {
            mu: self.mu,
            step: self.glr_step,
            max_iters: self.glr_max_iters,
            rel_tol: self.glr_rel_tol,
        }
    }

    pub fn glmnn(&self) -> GlmnnConfig {
        GlmnnConfig {
            rho: self.rho,
            gamma: self.gamma,
            eps_trace: self.eps_trace,
        }
    }

    pub fn gdpa(&self) -> GdpaConfig {
        GdpaConfig {
            rel_tol: self.gdpa_rel_tol,
            max_outer: self.gdpa_max_outer,
            max_sweeps: self.gdpa_max_sweeps,
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "objective" => self.objective = v.parse()?,
            "topology" => self.topology = v.parse()?,
            "dt" | "d_t" => self.d_t = parse_num(key, v)?,
            "dv" | "d_v" => self.d_v = parse_num(key, v)?,
            "dvt" | "d_vt" => self.d_vt = parse_num(key, v)?,
            "mu" => self.mu = parse_num(key, v)?,
            "glr_step" => self.glr_step = parse_num(key, v)?,
            "glr_max_iters" => self.glr_max_iters = parse_num(key, v)?,
            "glr_rel_tol" => self.glr_rel_tol = parse_num(key, v)?,
            "rho" => self.rho = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "eps_trace" => self.eps_trace = parse_num(key, v)?,
            "gdpa_rel_tol" => self.gdpa_rel_tol = parse_num(key, v)?,
            "gdpa_max_outer" => self.gdpa_max_outer = parse_num(key, v)?,
            "gdpa_max_sweeps" => self.gdpa_max_sweeps = parse_num(key, v)?,
            "n_train" => self.n_train = parse_num(key, v)?,
            "n_val" => self.n_val = parse_num(key, v)?,
            "p_t" => self.p_t = parse_num(key, v)?,
            "p_v" => self.p_v = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "knn_k" => {
                self.knn_k = match v {
                    "" | "none" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "sweep_n_train" => self.sweep_n_train = parse_list(key, v, str::parse::<usize>)?,
            "sweep_objective" => self.sweep_objective = parse_list(key, v, str::parse::<Objective>)?,
            "sweep_topology" => self.sweep_topology = parse_list(key, v, str::parse::<TopologyMode>)?,
            "synth_k" => self.synth.k = parse_num(key, v)?,
            "synth_points" => self.synth.n_points = parse_num(key, v)?,
            "synth_informative" => self.synth.n_informative = parse_num(key, v)?,
            "synth_noise" => self.synth.noise_rate = parse_num(key, v)?,
            "synth_seed" => self.synth.seed = parse_num(key, v)?,
            other => return Err(Error::Validation(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every non-blank, non-comment (`#`) line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedRow {
                line: n + 1,
                reason: "expected 'key = value'".into(),
            })?;
            self.set(key, value).map_err(|e| match e {
                Error::Validation(reason) => Error::MalformedRow { line: n + 1, reason },
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.d_t),
            ("dv", self.d_v),
            ("n_train", self.n_train),
            ("n_val", self.n_val),
            ("p_t", self.p_t),
            ("p_v", self.p_v),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if self.d_vt < 2 {
            return Err(Error::Validation("dvt must be at least 2".into()));
        }
        if self.sweep_n_train.iter().any(|&n| n < 2) || self.n_train < 2 {
            return Err(Error::Validation("n_train must be at least 2".into()));
        }
        if let Some(k) = self.knn_k {
            if k % 2 == 0 {
                return Err(Error::Validation("knn_k must be odd".into()));
            }
        }
        for o in self.objectives() {
            match o {
                Objective::Glr => self.glr().validate()?,
                Objective::GlmnnGdpa => {
                    self.glmnn().validate()?;
                    self.gdpa().validate()?;
                }
                Objective::GlmnnOracle => self.glmnn().validate()?,
            }
        }
        Ok(())
    }

    pub fn objectives(&self) -> Vec<Objective> {
        if self.sweep_objective.is_empty() {
            vec![self.objective]
        } else {
            self.sweep_objective.clone()
        }
    }

    pub fn train_sizes(&self) -> Vec<usize> {
        if self.sweep_n_train.is_empty() {
            vec![self.n_train]
        } else {
            self.sweep_n_train.clone()
        }
    }

    pub fn topologies(&self) -> Vec<TopologyMode> {
        if self.sweep_topology.is_empty() {
            vec![self.topology]
        } else {
            self.sweep_topology.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let c = RunConfig::parse(
            "# comment\nobjective = glmnn-gdpa\n dt=3\nmu = 0.5  # trailing\n\nsweep_n_train = 10, 20,40\nknn_k = 5\n",
        )
        .unwrap();
        assert_eq!(c.objective, Objective::GlmnnGdpa);
        assert_eq!(c.d_t, 3);
        assert_eq!(c.mu, 0.5);
        assert_eq!(c.sweep_n_train, vec![10, 20, 40]);
        assert_eq!(c.knn_k, Some(5));
        assert_eq!(c.train_sizes(), vec![10, 20, 40]);
        c.validate().unwrap();
    }

    #[test]
    fn reports_bad_lines() {
        assert!(matches!(RunConfig::parse("a = 1"), Err(Error::MalformedRow { line: 1, .. })));
        assert!(matches!(RunConfig::parse("\ndt = x"), Err(Error::MalformedRow { line: 2, .. })));
        assert!(matches!(RunConfig::parse("dt 3"), Err(Error::MalformedRow { .. })));
        assert!(RunConfig::parse("objective = lmnn").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.validate().unwrap();
        c.p_t = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.d_vt = 1;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.knn_k = Some(4);
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.objective = Objective::GlmnnGdpa;
        c.gamma = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn objective_names_round_trip() {
        for o in [Objective::Glr, Objective::GlmnnOracle, Objective::GlmnnGdpa] {
            assert_eq!(o.as_str().parse::<Objective>().unwrap(), o);
        }
    }
}
