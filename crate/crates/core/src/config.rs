//! Training configuration and its flat `key = value` file format.
//!
//! Blank lines and `#` comments are ignored; every other line must be
//! `key = value` with a known key. Unset keys keep their defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelDims, Objective, PriorType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub alpha: f64,
    pub lambda_ts: f64,
    /// Learning rate of `E^c`, `D` and `C` (and the ERM baseline).
    pub lr_main: f64,
    /// Learning rate of `E^w`, `F^w`, `E^v` and `F^v`.
    pub lr_dyn: f64,
    /// Samples drawn from each domain per step.
    pub batch_size: usize,
    pub epochs: usize,
    pub d_c: usize,
    pub d_w: usize,
    /// Categories of `z^v`; `None` means one per class.
    pub k_v: Option<usize>,
    pub gumbel_temperature: f64,
    pub prior_type: PriorType,
    pub seed: u64,
    pub feature_width: usize,
    pub lstm_hidden: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            alpha: 0.05,
            lambda_ts: 1.0,
            lr_main: 5e-5,
            lr_dyn: 5e-6,
            batch_size: 24,
            epochs: 200,
            d_c: 20,
            d_w: 20,
            k_v: None,
            gumbel_temperature: 1.0,
            prior_type: PriorType::Categorical,
            seed: 0,
            feature_width: 512,
            lstm_hidden: 64,
            grad_clip: 10.0,
        }
    }
}

/// Keys that only affect the latent model, not the ERM baseline.
pub const LSSAE_ONLY_KEYS: &[&str] = &[
    "lambda1",
    "lambda2",
    "lambda3",
    "alpha",
    "lambda_ts",
    "lr_dyn",
    "d_w",
    "k_v",
    "gumbel_temperature",
    "prior_type",
    "lstm_hidden",
];

pub const KEYS: &[&str] = &[
    "lambda1",
    "lambda2",
    "lambda3",
    "alpha",
    "lambda_ts",
    "lr_main",
    "lr_dyn",
    "batch_size",
    "epochs",
    "d_c",
    "d_w",
    "k_v",
    "gumbel_temperature",
    "prior_type",
    "seed",
    "feature_width",
    "lstm_hidden",
    "grad_clip",
];

impl TrainConfig {
    pub fn objective(&self) -> Objective {
        Objective {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            alpha: self.alpha,
            lambda_ts: self.lambda_ts,
        }
    }

    pub fn model_dims(&self, data_dim: usize, classes: usize) -> ModelDims {
        ModelDims {
            data_dim,
            classes,
            d_c: self.d_c,
            d_w: self.d_w,
            k_v: self.k_v.unwrap_or(classes),
            feature_width: self.feature_width,
            lstm_hidden: self.lstm_hidden,
            decoder_widths: vec![16, 64, 128],
            prior_type: self.prior_type,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda_ts", self.lambda_ts),
            ("grad_clip", self.grad_clip),
        ];
        for (k, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{k} must be a finite value ≥ 0, got {v}")));
            }
        }
        let positive = [
            ("alpha", self.alpha),
            ("lr_main", self.lr_main),
            ("lr_dyn", self.lr_dyn),
            ("gumbel_temperature", self.gumbel_temperature),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{k} must be a finite value > 0, got {v}")));
            }
        }
        let sizes = [
            ("batch_size", self.batch_size),
            ("d_c", self.d_c),
            ("d_w", self.d_w),
            ("feature_width", self.feature_width),
            ("lstm_hidden", self.lstm_hidden),
        ];
        for (k, v) in sizes {
            if v == 0 {
                return Err(Error::Invalid(format!("{k} must be at least 1")));
            }
        }
        if self.k_v == Some(0) {
            return Err(Error::Invalid("k_v must be at least 1".into()));
        }
        Ok(())
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Invalid(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "lambda1" => self.lambda1 = num(key, value)?,
            "lambda2" => self.lambda2 = num(key, value)?,
            "lambda3" => self.lambda3 = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "lambda_ts" => self.lambda_ts = num(key, value)?,
            "lr_main" => self.lr_main = num(key, value)?,
            "lr_dyn" => self.lr_dyn = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "d_c" => self.d_c = num(key, value)?,
            "d_w" => self.d_w = num(key, value)?,
            "k_v" => {
                self.k_v = if value == "auto" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "gumbel_temperature" => self.gumbel_temperature = num(key, value)?,
            "prior_type" => self.prior_type = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "feature_width" => self.feature_width = num(key, value)?,
            "lstm_hidden" => self.lstm_hidden = num(key, value)?,
            "grad_clip" => self.grad_clip = num(key, value)?,
            _ => return Err(Error::Invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. Returns the config and the
    /// keys that were set, in file order.
    pub fn parse(text: &str, origin: &Path) -> Result<(Self, Vec<String>)> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                msg,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(|e| err(match e {
                Error::Invalid(m) => m,
                other => other.to_string(),
            }))?;
            seen.push(key.to_string());
        }
        cfg.validate().map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        Ok((cfg, seen))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Renders every field in the file format; parsing the result yields `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("lambda1", self.lambda1.to_string());
        kv("lambda2", self.lambda2.to_string());
        kv("lambda3", self.lambda3.to_string());
        kv("alpha", self.alpha.to_string());
        kv("lambda_ts", self.lambda_ts.to_string());
        kv("lr_main", format!("{:e}", self.lr_main));
        kv("lr_dyn", format!("{:e}", self.lr_dyn));
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("d_c", self.d_c.to_string());
        kv("d_w", self.d_w.to_string());
        kv("k_v", self.k_v.map_or("auto".into(), |k| k.to_string()));
        kv("gumbel_temperature", self.gumbel_temperature.to_string());
        kv("prior_type", self.prior_type.to_string());
        kv("seed", self.seed.to_string());
        kv("feature_width", self.feature_width.to_string());
        kv("lstm_hidden", self.lstm_hidden.to_string());
        kv("grad_clip", self.grad_clip.to_string());
        s
    }
}
