//! Run configuration: model presets, training windows, sizes and stage options.
//!
//! A config is one JSON document. Fields left out take the defaults of the
//! chosen preset; command-line overrides are applied on top by the caller.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ed::EdOptions;
use crate::error::{Error, Result};
use crate::fss::DriftModel;
use crate::kernel::{Engine, FidelityKernel, KernelKind};
use crate::model::{Control, ModelParams, DEFAULT_MAX_SITES};
use crate::resources::BoundParams;

/// γ used for the XX and XXZ presets; exactly zero would make the XY angles
/// step functions.
pub const XX_GAMMA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Ising,
    Xy,
    Xx,
    Xxz,
    Custom,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Ising => "ising",
            Preset::Xy => "xy",
            Preset::Xx => "xx",
            Preset::Xxz => "xxz",
            Preset::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    Analytic,
    Ed,
}

/// Nearest-neighbour fidelity scan settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub lo: f64,
    pub hi: f64,
    pub spacing: f64,
    /// δx in F(x, x + δx).
    pub step: f64,
    /// Finer spacing used around the coarse argmin, if any.
    pub refine_spacing: Option<f64>,
}

impl ScanConfig {
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.spacing).round() as usize + 1;
        crate::linspace(self.lo, self.hi, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub gamma: f64,
    pub delta: f64,
    pub h: f64,
    pub control: Control,
    pub left_window: (f64, f64),
    pub right_window: (f64, f64),
    pub per_side: usize,
    pub sizes: Vec<usize>,
    pub engine: EngineChoice,
    pub ed: EdOptions,
    pub kind: KernelKind,
    /// Shots per SWAP-test entry; no sampling stage when absent.
    pub shots: Option<u64>,
    pub sample_diagonal: bool,
    pub svm_c: f64,
    /// Train on the sampled Gram when shots are set.
    pub train_on_sampled: bool,
    pub bounds: BoundParams,
    pub include_diagonal: bool,
    pub histogram_bins: usize,
    pub scan: ScanConfig,
    pub fit: DriftModel,
    pub seed: u64,
    pub max_sites: usize,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

/// The same fields, all optional, as read from JSON.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<Preset>,
    gamma: Option<f64>,
    delta: Option<f64>,
    h: Option<f64>,
    control: Option<Control>,
    left_window: Option<(f64, f64)>,
    right_window: Option<(f64, f64)>,
    per_side: Option<usize>,
    sizes: Option<Vec<usize>>,
    engine: Option<EngineChoice>,
    ed: Option<EdOptions>,
    kind: Option<KernelKind>,
    shots: Option<u64>,
    sample_diagonal: Option<bool>,
    svm_c: Option<f64>,
    train_on_sampled: Option<bool>,
    bounds: Option<BoundParams>,
    include_diagonal: Option<bool>,
    histogram_bins: Option<usize>,
    scan: Option<ScanConfig>,
    fit: Option<DriftModel>,
    seed: Option<u64>,
    max_sites: Option<usize>,
    out_dir: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let field_scan = ScanConfig {
            lo: 0.8,
            hi: 1.2,
            spacing: 0.01,
            step: 0.01,
            refine_spacing: None,
        };
        let base = RunConfig {
            preset,
            gamma: 1.0,
            delta: 0.0,
            h: 1.0,
            control: Control::Field,
            left_window: (0.7, 0.95),
            right_window: (1.05, 1.3),
            per_side: 16,
            sizes: vec![16],
            engine: EngineChoice::Analytic,
            ed: EdOptions::default(),
            kind: KernelKind::Global,
            shots: None,
            sample_diagonal: true,
            svm_c: crate::svm::DEFAULT_C,
            train_on_sampled: false,
            bounds: BoundParams::default(),
            include_diagonal: false,
            histogram_bins: 20,
            scan: field_scan,
            fit: DriftModel::Power,
            seed: 0,
            max_sites: DEFAULT_MAX_SITES,
            out_dir: PathBuf::from("out"),
            cache_dir: None,
        };
        match preset {
            Preset::Ising | Preset::Custom => base,
            Preset::Xy => RunConfig { gamma: 0.5, ..base },
            Preset::Xx => RunConfig { gamma: XX_GAMMA, ..base },
            Preset::Xxz => RunConfig {
                gamma: XX_GAMMA,
                delta: 0.5,
                h: 0.0,
                control: Control::Anisotropy,
                left_window: (0.35, 0.45),
                right_window: (0.55, 0.65),
                sizes: vec![12],
                engine: EngineChoice::Ed,
                scan: ScanConfig {
                    lo: 0.3,
                    hi: 0.7,
                    spacing: 0.005,
                    step: 0.005,
                    refine_spacing: None,
                },
                fit: DriftModel::Bkt,
                ..base
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let preset = raw.preset.unwrap_or(Preset::Custom);
        let d = RunConfig::preset(preset);
        if preset != Preset::Custom && raw.gamma.is_some_and(|g| g != d.gamma) {
            return Err(Error::Config(format!(
                "preset {} fixes gamma = {}; use the custom preset to change it",
                preset.name(),
                d.gamma
            )));
        }
        let cfg = RunConfig {
            preset,
            gamma: raw.gamma.unwrap_or(d.gamma),
            delta: raw.delta.unwrap_or(d.delta),
            h: raw.h.unwrap_or(d.h),
            control: raw.control.unwrap_or(d.control),
            left_window: raw.left_window.unwrap_or(d.left_window),
            right_window: raw.right_window.unwrap_or(d.right_window),
            per_side: raw.per_side.unwrap_or(d.per_side),
            sizes: raw.sizes.unwrap_or(d.sizes),
            engine: raw.engine.unwrap_or(d.engine),
            ed: raw.ed.unwrap_or(d.ed),
            kind: raw.kind.unwrap_or(d.kind),
            shots: raw.shots.or(d.shots),
            sample_diagonal: raw.sample_diagonal.unwrap_or(d.sample_diagonal),
            svm_c: raw.svm_c.unwrap_or(d.svm_c),
            train_on_sampled: raw.train_on_sampled.unwrap_or(d.train_on_sampled),
            bounds: raw.bounds.unwrap_or(d.bounds),
            include_diagonal: raw.include_diagonal.unwrap_or(d.include_diagonal),
            histogram_bins: raw.histogram_bins.unwrap_or(d.histogram_bins),
            scan: raw.scan.unwrap_or(d.scan),
            fit: raw.fit.unwrap_or(d.fit),
            seed: raw.seed.unwrap_or(d.seed),
            max_sites: raw.max_sites.unwrap_or(d.max_sites),
            out_dir: raw.out_dir.unwrap_or(d.out_dir),
            cache_dir: raw.cache_dir.or(d.cache_dir),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let (l, r) = (self.left_window, self.right_window);
        if !(l.0 <= l.1 && r.0 <= r.1) {
            return bad("each window must satisfy lo <= hi".into());
        }
        if !(l.1 < r.0) {
            return bad(format!(
                "windows must be disjoint with the left one below: [{}, {}] vs [{}, {}]",
                l.0, l.1, r.0, r.1
            ));
        }
        if self.per_side == 0 {
            return bad("per_side must be at least 1".into());
        }
        if self.sizes.is_empty() {
            return bad("sizes must not be empty".into());
        }
        for &n in &self.sizes {
            ModelParams::new(self.gamma, self.delta, self.h, n).map_err(|e| Error::Config(e.to_string()))?;
            if self.engine == EngineChoice::Ed && n > self.max_sites {
                return Err(Error::TooLarge {
                    n_sites: n,
                    cap: self.max_sites,
                });
            }
        }
        if self.engine == EngineChoice::Analytic
            && (self.delta != 0.0 || self.control == Control::Anisotropy)
        {
            return bad("the analytic engine covers delta = 0 only; choose engine \"ed\"".into());
        }
        if self.shots == Some(0) {
            return bad("shots must be at least 1".into());
        }
        if self.train_on_sampled && self.shots.is_none() {
            return bad("train_on_sampled needs shots".into());
        }
        if !(self.svm_c > 0.0) {
            return bad("svm_c must be positive".into());
        }
        if self.histogram_bins < 2 {
            return bad("histogram_bins must be at least 2".into());
        }
        let s = &self.scan;
        if !(s.lo < s.hi && s.spacing > 0.0 && s.step > 0.0) {
            return bad("scan needs lo < hi and positive spacing and step".into());
        }
        if s.refine_spacing.is_some_and(|f| !(f > 0.0 && f < s.spacing)) {
            return bad("scan refine_spacing must be positive and below spacing".into());
        }
        let b = &self.bounds;
        for (name, p) in [("p_spread", b.p_spread), ("p_ca", b.p_ca)] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name} must lie in (0, 1)"));
            }
        }
        if !(b.epsilon > 0.0 && b.epsilon_ca > 0.0) {
            return bad("epsilon values must be positive".into());
        }
        Ok(())
    }

    /// Fixed parameters at N; the control value is set per point.
    pub fn base_params(&self, n_sites: usize) -> ModelParams {
        ModelParams {
            gamma: self.gamma,
            delta: self.delta,
            h: self.h,
            n_sites,
        }
    }

    pub fn engine(&self) -> Engine {
        match self.engine {
            EngineChoice::Analytic => Engine::Analytic,
            EngineChoice::Ed => Engine::Ed(self.ed),
        }
    }

    pub fn kernel(&self) -> Result<FidelityKernel> {
        let k = FidelityKernel::new(self.engine(), self.kind);
        Ok(match (&self.cache_dir, self.engine) {
            (Some(dir), EngineChoice::Ed) => k.with_cache(crate::ed::StateCache::new(dir)?),
            _ => k,
        })
    }

    /// SHA-256 of the canonical JSON form, without the output and cache paths.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out_dir");
            obj.remove("cache_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_fix_gamma() {
        assert_eq!(RunConfig::preset(Preset::Ising).gamma, 1.0);
        assert_eq!(RunConfig::preset(Preset::Xy).gamma, 0.5);
        assert_eq!(RunConfig::preset(Preset::Xx).gamma, 1e-3);
        let xxz = RunConfig::preset(Preset::Xxz);
        assert_eq!((xxz.gamma, xxz.h, xxz.control), (1e-3, 0.0, Control::Anisotropy));
        for p in [Preset::Ising, Preset::Xy, Preset::Xx, Preset::Xxz] {
            RunConfig::preset(p).validate().unwrap();
        }
        assert!(RunConfig::from_json(r#"{"preset": "ising", "gamma": 0.5}"#).is_err());
    }

    #[test]
    fn json_overrides_preset() {
        let c = RunConfig::from_json(r#"{"preset": "xy", "sizes": [8, 10], "kind": "per-site"}"#).unwrap();
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.sizes, vec![8, 10]);
        assert_eq!(c.kind, KernelKind::PerSite);
    }

    #[test]
    fn rejects_bad_windows_and_sizes() {
        let overlap = r#"{"preset": "ising", "left_window": [0.7, 1.1], "right_window": [1.05, 1.3]}"#;
        assert!(matches!(RunConfig::from_json(overlap), Err(Error::Config(_))));
        let swapped = r#"{"preset": "ising", "left_window": [1.05, 1.3], "right_window": [0.7, 0.95]}"#;
        assert!(RunConfig::from_json(swapped).is_err());
        assert!(RunConfig::from_json(r#"{"preset": "ising", "sizes": []}"#).is_err());
        assert!(RunConfig::from_json(r#"{"preset": "ising", "sizes": [7]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"preset": "xxz", "sizes": [26]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"preset": "ising", "bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"preset": "xxz", "engine": "analytic"}"#).is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::preset(Preset::Xy);
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
