//! Pipeline configuration: a flat `key = value` text format with
//! `[sections]`. Serialization is canonical (fixed order, shortest
//! round-trip floats), so configs survive a parse/serialize cycle byte for
//! byte and can be embedded in manifests.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::evaluate::Eq6Mode;
use crate::icmatch::CorrelationMode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputMode {
    Synth,
    Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    // [input]
    pub mode: InputMode,
    pub data_dirs: Vec<PathBuf>,
    pub design_path: Option<PathBuf>,
    // [synth]
    pub synth_subjects: usize,
    pub synth_dims: [usize; 3],
    pub synth_parcels: usize,
    pub synth_frames: usize,
    pub synth_tr_seconds: f64,
    pub synth_task_period_seconds: f64,
    pub synth_latency_jitter_seconds: f64,
    pub synth_noise_sigma: f64,
    pub synth_seed: u64,
    // [ica]
    pub ica_n_components: usize, // 0 = auto (95% variance, cap 60)
    pub ica_seed: u64,
    pub ica_max_iter: usize,
    pub ica_tol: f64,
    pub ica_mode: CorrelationMode,
    pub ica_n_clusters: usize,
    pub ica_n_select: usize,
    pub ica_manual_indices: Vec<usize>,
    // [seeds]
    pub seed_radius: f64,
    pub seed_count: usize, // 0 = auto (15 multi-subject, 30 single)
    // [pca]
    pub pca_drop_leading: usize,
    pub pca_drop_trailing: usize,
    pub pca_variance_floor: f64,
    // [pls]
    pub pls_k_values: Vec<usize>,
    // [parcellate]
    pub parcel_count: usize, // 0 = ground-truth count on synthetic input
    pub embed_dims: usize,
    pub parcel_seed: u64,
    pub parcel_restarts: usize,
    // [evaluate]
    pub glm_threshold: f64,
    pub pls_threshold: f64,
    pub eq6_mode: Eq6Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: InputMode::Synth,
            data_dirs: Vec::new(),
            design_path: None,
            synth_subjects: 1,
            synth_dims: [16, 16, 4],
            synth_parcels: 8,
            synth_frames: 120,
            synth_tr_seconds: 3.0,
            synth_task_period_seconds: 28.8,
            synth_latency_jitter_seconds: 0.0,
            synth_noise_sigma: 0.5,
            synth_seed: 7,
            ica_n_components: 0,
            ica_seed: 11,
            ica_max_iter: 500,
            ica_tol: 1e-6,
            ica_mode: CorrelationMode::Absolute,
            ica_n_clusters: 3,
            ica_n_select: 2,
            ica_manual_indices: Vec::new(),
            seed_radius: 6.0,
            seed_count: 0,
            pca_drop_leading: 2,
            pca_drop_trailing: 0,
            pca_variance_floor: 1e-4,
            pls_k_values: vec![1],
            parcel_count: 0,
            embed_dims: 20,
            parcel_seed: 13,
            parcel_restarts: 10,
            glm_threshold: 2.0,
            pls_threshold: 3.0,
            eq6_mode: Eq6Mode::Sqrt,
        }
    }
}

fn join_list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl PipelineConfig {
    /// Canonical text form; `parse` inverts it exactly.
    pub fn to_text(&self) -> String {
        let mode = match self.mode {
            InputMode::Synth => "synth",
            InputMode::Dataset => "dataset",
        };
        let dirs = self
            .data_dirs
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(",");
        let design = self
            .design_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let ica_mode = match self.ica_mode {
            CorrelationMode::Absolute => "absolute",
            CorrelationMode::Signed => "signed",
        };
        let eq6 = match self.eq6_mode {
            Eq6Mode::Sqrt => "sqrt",
            Eq6Mode::Literal => "literal",
        };
        format!(
            "[input]\n\
             mode = {mode}\n\
             data_dirs = {dirs}\n\
             design = {design}\n\
             [synth]\n\
             subjects = {}\n\
             dims = {}x{}x{}\n\
             parcels = {}\n\
             frames = {}\n\
             tr_seconds = {}\n\
             task_period_seconds = {}\n\
             latency_jitter_seconds = {}\n\
             noise_sigma = {}\n\
             seed = {}\n\
             [ica]\n\
             n_components = {}\n\
             seed = {}\n\
             max_iter = {}\n\
             tol = {}\n\
             mode = {ica_mode}\n\
             n_clusters = {}\n\
             n_select = {}\n\
             ic_indices = {}\n\
             [seeds]\n\
             radius = {}\n\
             n_seeds = {}\n\
             [pca]\n\
             drop_leading = {}\n\
             drop_trailing = {}\n\
             variance_floor = {}\n\
             [pls]\n\
             k_values = {}\n\
             [parcellate]\n\
             parcels = {}\n\
             dims = {}\n\
             seed = {}\n\
             restarts = {}\n\
             [evaluate]\n\
             glm_threshold = {}\n\
             pls_threshold = {}\n\
             eq6 = {eq6}\n",
            self.synth_subjects,
            self.synth_dims[0],
            self.synth_dims[1],
            self.synth_dims[2],
            self.synth_parcels,
            self.synth_frames,
            self.synth_tr_seconds,
            self.synth_task_period_seconds,
            self.synth_latency_jitter_seconds,
            self.synth_noise_sigma,
            self.synth_seed,
            self.ica_n_components,
            self.ica_seed,
            self.ica_max_iter,
            self.ica_tol,
            self.ica_n_clusters,
            self.ica_n_select,
            join_list(&self.ica_manual_indices),
            self.seed_radius,
            self.seed_count,
            self.pca_drop_leading,
            self.pca_drop_trailing,
            self.pca_variance_floor,
            join_list(&self.pls_k_values),
            self.parcel_count,
            self.embed_dims,
            self.parcel_seed,
            self.parcel_restarts,
            self.glm_threshold,
            self.pls_threshold,
        )
    }

    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
            value
                .parse::<T>()
                .map_err(|_| Error::Config(format!("{section}.{key}: cannot parse '{value}'")))
        }
        fn list_usize(section: &str, key: &str, value: &str) -> Result<Vec<usize>> {
            if value.is_empty() {
                return Ok(Vec::new());
            }
            value
                .split(',')
                .map(|v| num::<usize>(section, key, v.trim()))
                .collect()
        }
        match (section, key) {
            ("input", "mode") => {
                self.mode = match value {
                    "synth" => InputMode::Synth,
                    "dataset" => InputMode::Dataset,
                    other => {
                        return Err(Error::Config(format!(
                            "input.mode must be synth or dataset, got '{other}'"
                        )))
                    }
                }
            }
            ("input", "data_dirs") => {
                self.data_dirs = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|v| PathBuf::from(v.trim())).collect()
                }
            }
            ("input", "design") => {
                self.design_path = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            ("synth", "subjects") => self.synth_subjects = num(section, key, value)?,
            ("synth", "dims") => {
                let parts: Vec<&str> = value.split('x').collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!(
                        "synth.dims must look like 16x16x4, got '{value}'"
                    )));
                }
                for (i, p) in parts.iter().enumerate() {
                    self.synth_dims[i] = num(section, key, p.trim())?;
                }
            }
            ("synth", "parcels") => self.synth_parcels = num(section, key, value)?,
            ("synth", "frames") => self.synth_frames = num(section, key, value)?,
            ("synth", "tr_seconds") => self.synth_tr_seconds = num(section, key, value)?,
            ("synth", "task_period_seconds") => {
                self.synth_task_period_seconds = num(section, key, value)?
            }
            ("synth", "latency_jitter_seconds") => {
                self.synth_latency_jitter_seconds = num(section, key, value)?
            }
            ("synth", "noise_sigma") => self.synth_noise_sigma = num(section, key, value)?,
            ("synth", "seed") => self.synth_seed = num(section, key, value)?,
            ("ica", "n_components") => self.ica_n_components = num(section, key, value)?,
            ("ica", "seed") => self.ica_seed = num(section, key, value)?,
            ("ica", "max_iter") => self.ica_max_iter = num(section, key, value)?,
            ("ica", "tol") => self.ica_tol = num(section, key, value)?,
            ("ica", "mode") => {
                self.ica_mode = match value {
                    "absolute" => CorrelationMode::Absolute,
                    "signed" => CorrelationMode::Signed,
                    other => {
                        return Err(Error::Config(format!(
                            "ica.mode must be absolute or signed, got '{other}'"
                        )))
                    }
                }
            }
            ("ica", "n_clusters") => self.ica_n_clusters = num(section, key, value)?,
            ("ica", "n_select") => self.ica_n_select = num(section, key, value)?,
            ("ica", "ic_indices") => self.ica_manual_indices = list_usize(section, key, value)?,
            ("seeds", "radius") => self.seed_radius = num(section, key, value)?,
            ("seeds", "n_seeds") => self.seed_count = num(section, key, value)?,
            ("pca", "drop_leading") => self.pca_drop_leading = num(section, key, value)?,
            ("pca", "drop_trailing") => self.pca_drop_trailing = num(section, key, value)?,
            ("pca", "variance_floor") => self.pca_variance_floor = num(section, key, value)?,
            ("pls", "k_values") => {
                self.pls_k_values = list_usize(section, key, value)?;
            }
            ("parcellate", "parcels") => self.parcel_count = num(section, key, value)?,
            ("parcellate", "dims") => self.embed_dims = num(section, key, value)?,
            ("parcellate", "seed") => self.parcel_seed = num(section, key, value)?,
            ("parcellate", "restarts") => self.parcel_restarts = num(section, key, value)?,
            ("evaluate", "glm_threshold") => self.glm_threshold = num(section, key, value)?,
            ("evaluate", "pls_threshold") => self.pls_threshold = num(section, key, value)?,
            ("evaluate", "eq6") => {
                self.eq6_mode = match value {
                    "sqrt" => Eq6Mode::Sqrt,
                    "literal" => Eq6Mode::Literal,
                    other => {
                        return Err(Error::Config(format!(
                            "evaluate.eq6 must be sqrt or literal, got '{other}'"
                        )))
                    }
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown key '{key}' in section [{section}]"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == InputMode::Dataset && self.data_dirs.is_empty() {
            return Err(Error::Config(
                "input.data_dirs is required when input.mode = dataset".into(),
            ));
        }
        if self.pls_k_values.is_empty() {
            return Err(Error::Config("pls.k_values must not be empty".into()));
        }
        if self.pls_k_values.iter().any(|&k| k == 0) {
            return Err(Error::Config(
                "pls.k_values entries must be positive".into(),
            ));
        }
        if self.ica_n_clusters == 0 || self.ica_n_select == 0 {
            return Err(Error::Config(
                "ica.n_clusters and ica.n_select must be positive".into(),
            ));
        }
        if !(self.seed_radius > 0.0) {
            return Err(Error::Config("seeds.radius must be positive".into()));
        }
        if self.parcel_restarts == 0 {
            return Err(Error::Config("parcellate.restarts must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_lossless() {
        let mut cfg = PipelineConfig::default();
        cfg.synth_noise_sigma = 0.1234567890123;
        cfg.pls_k_values = vec![1, 2, 3];
        cfg.ica_manual_indices = vec![4, 9];
        cfg.mode = InputMode::Dataset;
        cfg.data_dirs = vec![PathBuf::from("a/b"), PathBuf::from("c")];
        cfg.design_path = Some(PathBuf::from("design.csv"));
        let text = cfg.to_text();
        let back = PipelineConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "[input]\nmode = synth\nbogus = 3\n";
        match PipelineConfig::parse(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("bogus"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_dataset_dirs_is_named() {
        let text = "[input]\nmode = dataset\n";
        match PipelineConfig::parse(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("data_dirs"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let text = "# a comment\n\n[synth]\nseed = 99\n";
        let cfg = PipelineConfig::parse(text).unwrap();
        assert_eq!(cfg.synth_seed, 99);
    }
}
