//! Run configuration: line-based `key = value` text with `#` comments.
//!
//! ```text
//! # three scales, 8x8 patches
//! patch_sides = 8
//! steps = 4, 4, 7
//! s_z = 10
//! ```
//!
//! `patch_sides` takes one value for every scale or one per scale; the scale
//! count is the length of `steps`. Unknown and repeated keys are rejected.

use std::collections::HashSet;
use std::path::Path;

use crate::dictlearn::LearnConfig;
use crate::error::{Error, Result};
use crate::fsio::read_all;
use crate::metrics::SsimParams;
use crate::patching::ScaleGeometry;
use crate::separation::SeparationConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Finest first.
    pub scales: Vec<ScaleGeometry>,
    /// Number of finest scales that get their own trained dictionaries;
    /// coarser scales re-use the last trained one.
    pub trained_scales: usize,
    /// γ
    pub common_atoms: usize,
    /// d
    pub innovation_atoms: usize,
    pub s_z: usize,
    pub s_v: usize,
    pub iterations: usize,
    pub objective_tol: f64,
    /// Training patches per scale.
    pub train_patches: usize,
    pub seed: u64,
    pub lowpass_split: f64,
    /// Atoms of each MCA dictionary.
    pub mca_atoms: usize,
    /// Per-component MCA budget.
    pub mca_sparsity: usize,
    pub ssim: SsimParams,
    pub synth_height: usize,
    pub synth_width: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scales: vec![
                ScaleGeometry::new(8, 4),
                ScaleGeometry::new(8, 4),
                ScaleGeometry::new(8, 7),
            ],
            trained_scales: 2,
            common_atoms: 256,
            innovation_atoms: 256,
            s_z: 10,
            s_v: 8,
            iterations: 50,
            objective_tol: 1e-4,
            train_patches: 46000,
            seed: 0,
            lowpass_split: 0.5,
            mca_atoms: 256,
            mca_sparsity: 18,
            ssim: SsimParams::default(),
            synth_height: 256,
            synth_width: 256,
        }
    }
}

fn config_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        reason: reason.into(),
    }
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| config_err(line, format!("{key}: cannot parse '{}'", s.trim())))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(line, format!("{key}: cannot parse '{value}'")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        let mut sides: Option<(usize, Vec<usize>)> = None;
        let mut steps: Option<(usize, Vec<usize>)> = None;
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("expected key = value, got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(config_err(line, format!("duplicate key '{key}'")));
            }
            match key {
                "patch_sides" => sides = Some((line, parse_list(line, key, value)?)),
                "steps" => steps = Some((line, parse_list(line, key, value)?)),
                "trained_scales" => cfg.trained_scales = parse_one(line, key, value)?,
                "common_atoms" => cfg.common_atoms = parse_one(line, key, value)?,
                "innovation_atoms" => cfg.innovation_atoms = parse_one(line, key, value)?,
                "s_z" => cfg.s_z = parse_one(line, key, value)?,
                "s_v" => cfg.s_v = parse_one(line, key, value)?,
                "iterations" => cfg.iterations = parse_one(line, key, value)?,
                "objective_tol" => cfg.objective_tol = parse_one(line, key, value)?,
                "train_patches" => cfg.train_patches = parse_one(line, key, value)?,
                "seed" => cfg.seed = parse_one(line, key, value)?,
                "lowpass_split" => cfg.lowpass_split = parse_one(line, key, value)?,
                "mca_atoms" => cfg.mca_atoms = parse_one(line, key, value)?,
                "mca_sparsity" => cfg.mca_sparsity = parse_one(line, key, value)?,
                "ssim_window" => cfg.ssim.window_side = parse_one(line, key, value)?,
                "ssim_sigma" => cfg.ssim.sigma = parse_one(line, key, value)?,
                "ssim_k1" => cfg.ssim.k1 = parse_one(line, key, value)?,
                "ssim_k2" => cfg.ssim.k2 = parse_one(line, key, value)?,
                "ssim_range" => {
                    cfg.ssim.dynamic_range = if value == "auto" {
                        None
                    } else {
                        Some(parse_one(line, key, value)?)
                    }
                }
                "synth_height" => cfg.synth_height = parse_one(line, key, value)?,
                "synth_width" => cfg.synth_width = parse_one(line, key, value)?,
                _ => return Err(config_err(line, format!("unknown key '{key}'"))),
            }
        }
        if let Some((line, st)) = steps {
            let side_list = match &sides {
                Some((_, s)) => s.clone(),
                None => vec![cfg.scales[0].patch_side],
            };
            cfg.scales = Self::geometries(line, &side_list, &st)?;
        } else if let Some((line, s)) = sides {
            let st: Vec<usize> = cfg.scales.iter().map(|g| g.step).collect();
            cfg.scales = Self::geometries(line, &s, &st)?;
        }
        cfg.validate().map_err(|e| match e {
            Error::Config { .. } => e,
            other => config_err(last_line, other.to_string()),
        })?;
        Ok(cfg)
    }

    fn geometries(line: usize, sides: &[usize], steps: &[usize]) -> Result<Vec<ScaleGeometry>> {
        let l = steps.len();
        if sides.len() != 1 && sides.len() != l {
            return Err(config_err(
                line,
                format!("{} patch sides for {l} steps", sides.len()),
            ));
        }
        Ok((0..l)
            .map(|i| ScaleGeometry::new(sides[if sides.len() == 1 { 0 } else { i }], steps[i]))
            .collect())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes = read_all(path)?;
        let text = String::from_utf8(bytes).map_err(|_| config_err(0, "file is not UTF-8"))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.separation_config().validate()?;
        if self.trained_scales == 0 || self.trained_scales > self.scales.len() {
            return Err(Error::param(format!(
                "trained_scales {} outside 1..={}",
                self.trained_scales,
                self.scales.len()
            )));
        }
        for g in &self.scales[..self.trained_scales] {
            self.learn_config(0)
                .validate(g.patch_dim(), self.common_atoms, self.innovation_atoms)?;
        }
        if self.train_patches == 0 {
            return Err(Error::param("train_patches must be positive"));
        }
        for g in &self.scales {
            if self.mca_sparsity > self.mca_atoms || 2 * self.mca_sparsity > g.patch_dim() {
                return Err(Error::param(format!(
                    "mca_sparsity {} too large for {} atoms of dimension {}",
                    self.mca_sparsity,
                    self.mca_atoms,
                    g.patch_dim()
                )));
            }
        }
        self.ssim.validate()?;
        let side = self.scales[0].patch_side;
        if self.synth_height < side || self.synth_width < side {
            return Err(Error::param("synthetic image smaller than a patch"));
        }
        Ok(())
    }

    /// Learning parameters for trained scale `scale_index` (0-based); the
    /// seed is offset per scale.
    pub fn learn_config(&self, scale_index: usize) -> LearnConfig {
        LearnConfig {
            s_z: self.s_z,
            s_v: self.s_v,
            iterations: self.iterations,
            objective_tol: self.objective_tol,
            seed: self.seed.wrapping_add(scale_index as u64),
        }
    }

    pub fn separation_config(&self) -> SeparationConfig {
        SeparationConfig {
            scales: self.scales.clone(),
            s_z: self.s_z,
            s_v: self.s_v,
            lowpass_split: self.lowpass_split,
        }
    }

    /// Canonical text form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<usize>| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("patch_sides", join(self.scales.iter().map(|g| g.patch_side).collect()));
        kv("steps", join(self.scales.iter().map(|g| g.step).collect()));
        kv("trained_scales", self.trained_scales.to_string());
        kv("common_atoms", self.common_atoms.to_string());
        kv("innovation_atoms", self.innovation_atoms.to_string());
        kv("s_z", self.s_z.to_string());
        kv("s_v", self.s_v.to_string());
        kv("iterations", self.iterations.to_string());
        kv("objective_tol", format!("{:?}", self.objective_tol));
        kv("train_patches", self.train_patches.to_string());
        kv("seed", self.seed.to_string());
        kv("lowpass_split", format!("{:?}", self.lowpass_split));
        kv("mca_atoms", self.mca_atoms.to_string());
        kv("mca_sparsity", self.mca_sparsity.to_string());
        kv("ssim_window", self.ssim.window_side.to_string());
        kv("ssim_sigma", format!("{:?}", self.ssim.sigma));
        kv("ssim_k1", format!("{:?}", self.ssim.k1));
        kv("ssim_k2", format!("{:?}", self.ssim.k2));
        kv(
            "ssim_range",
            self.ssim
                .dynamic_range
                .map_or("auto".to_string(), |r| format!("{r:?}")),
        );
        kv("synth_height", self.synth_height.to_string());
        kv("synth_width", self.synth_width.to_string());
        out
    }
}
