//! JSON pipeline configuration. Absent fields take their defaults; unknown
//! fields are rejected. Command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use aquaclear::baselines::{ClaheConfig, DEFAULT_SSR_SIGMA};
use aquaclear::dataops::DegradationConfig;
use aquaclear::metrics::SsimParams;
use aquaclear::msr::MsrConfig;
use aquaclear::pipeline::{Method, Stage, StageOrder};
use aquaclear::srcnn::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    /// In-process repetitions per method and image; the median is reported.
    /// Zero skips timing and reports 0 seconds.
    pub timing_reps: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { methods: Method::DEFAULT_SET.to_vec(), timing_reps: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: Option<PathBuf>,
    pub scale_factor: usize,
    pub stage: Stage,
    pub order: StageOrder,
    pub msr: MsrConfig,
    pub ssim: SsimParams,
    pub clahe: ClaheConfig,
    pub ssr_sigma: f64,
    pub degradation: DegradationConfig,
    pub train: TrainConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model: None,
            scale_factor: 2,
            stage: Stage::Full,
            order: StageOrder::SrcnnFirst,
            msr: MsrConfig::default(),
            ssim: SsimParams::default(),
            clahe: ClaheConfig::default(),
            ssr_sigma: DEFAULT_SSR_SIGMA,
            degradation: DegradationConfig::default(),
            train: TrainConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

fn section<T>(name: &str, r: aquaclear::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| {
        let msg = e.to_string();
        // Messages that already carry their field path keep it.
        if msg.contains(&format!("{name}.")) {
            CliError::config(msg)
        } else {
            CliError::config(format!("{name}: {msg}"))
        }
    })
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.scale_factor == 0 {
            return Err(CliError::config("scale_factor must be at least 1"));
        }
        if !(self.ssr_sigma > 0.0) {
            return Err(CliError::config(format!("ssr_sigma must be positive, got {}", self.ssr_sigma)));
        }
        section("msr", self.msr.validate())?;
        section("ssim", self.ssim.validate())?;
        section("clahe", self.clahe.validate())?;
        section("degradation", self.degradation.validate())?;
        section("train", self.train.validate())?;
        if self.benchmark.methods.is_empty() {
            return Err(CliError::config("benchmark.methods must not be empty"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(format!("config field {path}: {}", e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads a configuration file; `None` gives the defaults.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
            PipelineConfig::from_json(&text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn single_scale_msr() {
        let cfg = PipelineConfig::from_json(r#"{"msr": {"scales": [80]}}"#).unwrap();
        assert_eq!(cfg.msr, MsrConfig::single_scale(80.0));
    }

    #[test]
    fn errors_name_the_field() {
        let err = PipelineConfig::from_json(r#"{"msr": {"scales": [-1]}}"#).unwrap_err();
        assert!(err.message.contains("msr.scales[0]"), "{}", err.message);
        assert_eq!(err.code, 2);
        let err = PipelineConfig::from_json(r#"{"msr": {"scale": [1]}}"#).unwrap_err();
        assert!(err.message.contains("msr") && err.message.contains("scale"), "{}", err.message);
        let err = PipelineConfig::from_json(r#"{"train": {"iterations": "many"}}"#).unwrap_err();
        assert!(err.message.contains("train.iterations"), "{}", err.message);
        let err = PipelineConfig::from_json(r#"{"train": {"patch_size": 8}}"#).unwrap_err();
        assert!(err.message.contains("train") && err.message.contains("patch_size"), "{}", err.message);
        assert!(PipelineConfig::from_json("{").is_err());
    }

    #[test]
    fn methods_parse_by_name() {
        let cfg = PipelineConfig::from_json(r#"{"benchmark": {"methods": ["input", "hist_equalize"]}}"#).unwrap();
        assert_eq!(cfg.benchmark.methods, vec![Method::Input, Method::HistEqualize]);
        assert!(PipelineConfig::from_json(r#"{"benchmark": {"methods": ["nope"]}}"#).is_err());
    }
}
