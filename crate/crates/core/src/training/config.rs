//! Training hyperparameters and the `key = value` config format.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::NormMode;
use crate::scoring::WeightScheme;

/// Surrogate derivative used in place of `d sign(v)/dv`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Estimator {
    /// `(2γ/√π)·exp(−(γv)²)`
    DiracGauss,
    /// Constant 1.
    Ste,
    /// `γ(1 − tanh²(γv))`
    Tanh,
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirac_gauss" => Ok(Self::DiracGauss),
            "ste" => Ok(Self::Ste),
            "tanh" => Ok(Self::Tanh),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DiracGauss => "dirac_gauss",
            Self::Ste => "ste",
            Self::Tanh => "tanh",
        })
    }
}

/// Ranking-position weights `w_k` for the distillation loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RankWeightScheme {
    /// `λ1·exp(−λ2·k)`
    Geometric,
    /// `(R − k)/R`
    LinearDecay,
    /// `1/k`
    InverseRank,
    /// `2^−k`
    ExpRank,
}

impl FromStr for RankWeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(Self::Geometric),
            "linear_decay" => Ok(Self::LinearDecay),
            "inverse_rank" => Ok(Self::InverseRank),
            "exp_rank" => Ok(Self::ExpRank),
            other => Err(Error::Config(format!("unknown wk_scheme {other:?}"))),
        }
    }
}

impl fmt::Display for RankWeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Geometric => "geometric",
            Self::LinearDecay => "linear_decay",
            Self::InverseRank => "inverse_rank",
            Self::ExpRank => "exp_rank",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingConfig {
    pub dim: usize,
    pub layers: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub top_r: usize,
    pub epochs_teacher: usize,
    pub epochs_student: usize,
    pub estimator: Estimator,
    pub wl_scheme: WeightScheme,
    pub wk_scheme: RankWeightScheme,
    pub seed: u64,
    pub norm_mode: NormMode,
    pub init_std: f64,
}

impl Default for TrainingConfig {
    /// MovieLens settings: B=2048, d=256, η=1e-3, λ=1e-4, λ1=1, λ2=0.1, γ=1, L=2.
    fn default() -> Self {
        Self {
            dim: 256,
            layers: 2,
            batch_size: 2048,
            lr: 1e-3,
            l2: 1e-4,
            lambda1: 1.0,
            lambda2: 0.1,
            gamma: 1.0,
            top_r: 100,
            epochs_teacher: 100,
            epochs_student: 50,
            estimator: Estimator::DiracGauss,
            wl_scheme: WeightScheme::LinearShifted,
            wk_scheme: RankWeightScheme::Geometric,
            seed: 2022,
            norm_mode: NormMode::Symmetric,
            init_std: 0.1,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl TrainingConfig {
    /// Sets one field by name. Short aliases (`d`, `L`, `B`, `eta`, `lambda`, `R`) are accepted.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "dim" | "d" => self.dim = parse_num(key, value)?,
            "layers" | "L" => self.layers = parse_num(key, value)?,
            "batch_size" | "B" => self.batch_size = parse_num(key, value)?,
            "lr" | "eta" => self.lr = parse_num(key, value)?,
            "l2" | "lambda" => self.l2 = parse_num(key, value)?,
            "lambda1" => self.lambda1 = parse_num(key, value)?,
            "lambda2" => self.lambda2 = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "top_r" | "R" => self.top_r = parse_num(key, value)?,
            "epochs_teacher" => self.epochs_teacher = parse_num(key, value)?,
            "epochs_student" => self.epochs_student = parse_num(key, value)?,
            "estimator" => self.estimator = value.parse()?,
            "wl_scheme" => self.wl_scheme = value.parse()?,
            "wk_scheme" => self.wk_scheme = value.parse()?,
            "seed" => self.seed = parse_num(key, value)?,
            "norm_mode" => self.norm_mode = value.parse()?,
            "init_std" => self.init_std = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: n + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders every field as `key = value` lines, readable by [`Self::from_text`].
    pub fn to_text(&self) -> String {
        format!(
            "dim = {}\nlayers = {}\nbatch_size = {}\nlr = {:e}\nl2 = {:e}\nlambda1 = {}\nlambda2 = {}\n\
             gamma = {}\ntop_r = {}\nepochs_teacher = {}\nepochs_student = {}\nestimator = {}\n\
             wl_scheme = {}\nwk_scheme = {}\nseed = {}\nnorm_mode = {}\ninit_std = {}\n",
            self.dim,
            self.layers,
            self.batch_size,
            self.lr,
            self.l2,
            self.lambda1,
            self.lambda2,
            self.gamma,
            self.top_r,
            self.epochs_teacher,
            self.epochs_student,
            self.estimator,
            self.wl_scheme,
            self.wk_scheme,
            self.seed,
            self.norm_mode,
            self.init_std,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        for (name, v) in [("l2", self.l2), ("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(&format!("{name} must be non-negative"));
            }
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be positive");
        }
        if self.top_r == 0 {
            return bad("top_r must be positive");
        }
        if !(self.init_std > 0.0) || !self.init_std.is_finite() {
            return bad("init_std must be positive");
        }
        Ok(())
    }

    /// Distillation weights `w_1..w_R`; `lambda1` scales every scheme.
    pub fn rank_weights(&self, r: usize) -> Vec<f64> {
        (1..=r)
            .map(|k| {
                let kf = k as f64;
                self.lambda1
                    * match self.wk_scheme {
                        RankWeightScheme::Geometric => (-self.lambda2 * kf).exp(),
                        RankWeightScheme::LinearDecay => (r - k) as f64 / r as f64,
                        RankWeightScheme::InverseRank => 1.0 / kf,
                        RankWeightScheme::ExpRank => 2f64.powf(-kf),
                    }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_movielens_settings() {
        let c = TrainingConfig::default();
        assert_eq!((c.batch_size, c.dim, c.layers), (2048, 256, 2));
        assert_eq!((c.lr, c.l2, c.lambda1, c.lambda2, c.gamma), (1e-3, 1e-4, 1.0, 0.1, 1.0));
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainingConfig::default();
        c.estimator = Estimator::Tanh;
        c.lr = 5e-4;
        c.norm_mode = NormMode::Left;
        assert_eq!(TrainingConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_error() {
        let err = TrainingConfig::from_text("dim = 8\nfoo = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(TrainingConfig::from_text("dim 8").is_err());
        assert!(TrainingConfig::from_text("dim = 0").is_err());
    }

    #[test]
    fn geometric_rank_weights() {
        let c = TrainingConfig::default();
        let w = c.rank_weights(10);
        assert!((w[0] - 0.904837418).abs() < 1e-9);
        assert!((w[9] - 0.367879441).abs() < 1e-9);
        assert!(w.windows(2).all(|p| p[1] < p[0]));
    }
}
