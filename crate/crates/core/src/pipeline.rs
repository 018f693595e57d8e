//! Batch stages over the sizes of a [`RunConfig`], writing versioned artifacts.
//!
//! Stage order: scan → gram → sample → train → boundary → bounds → fit.
//! A [`Run`] computes each stage on demand and memoizes per-size results, so
//! a single command only pays for the stages it needs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result, StageContext};
use crate::fss::{self, DriftData, DriftSource, FitResult};
use crate::io::{self, fmt_f64, GramDocument, Manifest};
use crate::kernel::{fidelity_scan, FidelityKernel, FidelityScan, GramMatrix};
use crate::resources::{self, EnsembleStats, ShotBounds};
use crate::svm::{self, LabeledSet, MidpointDiagnostics, SvmModel, TrainOptions};
use crate::swaptest::{self, ShotConfig};

/// Points on the decision-function curve written for plotting.
const CURVE_POINTS: usize = 61;

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryEstimate {
    pub n_sites: usize,
    pub x_star: f64,
    pub midpoint: Option<MidpointDiagnostics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsRow {
    pub n_sites: usize,
    pub stats: EnsembleStats,
    pub bounds: ShotBounds,
    pub histogram: Vec<u64>,
}

pub struct Run {
    pub cfg: RunConfig,
    pub hash: String,
    kernel: FidelityKernel,
    out: PathBuf,
    files: Vec<(PathBuf, String)>,
    log: Vec<String>,
    grams: BTreeMap<usize, GramMatrix>,
    sampled: BTreeMap<usize, GramMatrix>,
    models: BTreeMap<usize, SvmModel>,
    boundaries: BTreeMap<usize, BoundaryEstimate>,
}

fn timestamp() -> String {
    let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    format!("{}.{:03}", d.as_secs(), d.subsec_millis())
}

impl Run {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        let kernel = cfg.kernel()?;
        let out = cfg.out_dir.clone();
        fs::create_dir_all(&out)?;
        Ok(Run {
            cfg,
            hash,
            kernel,
            out,
            files: Vec::new(),
            log: Vec::new(),
            grams: BTreeMap::new(),
            sampled: BTreeMap::new(),
            models: BTreeMap::new(),
            boundaries: BTreeMap::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    /// Files written so far with their artifact kind.
    pub fn files(&self) -> &[(PathBuf, String)] {
        &self.files
    }

    fn note(&mut self, stage: &str, msg: String) {
        log::info!("{stage}: {msg}");
        self.log.push(format!("{} {stage} {msg}", timestamp()));
    }

    fn path(&mut self, name: &str, kind: &str) -> PathBuf {
        let p = self.out.join(name);
        self.files.push((p.clone(), kind.to_string()));
        p
    }

    fn label(&self, x: f64) -> String {
        format!("{}={}", self.cfg.control.symbol(), fmt_f64(x))
    }

    fn training_set(&self, n: usize) -> Result<LabeledSet> {
        LabeledSet::from_windows(
            &self.cfg.base_params(n),
            self.cfg.control,
            self.cfg.left_window,
            self.cfg.right_window,
            self.cfg.per_side,
        )
    }

    pub fn scan(&mut self) -> Result<Vec<FidelityScan>> {
        let mut scans = Vec::new();
        let mut rows = Vec::new();
        for &n in &self.cfg.sizes.clone() {
            let base = self.cfg.base_params(n);
            let sc = self.cfg.scan;
            let coarse = fidelity_scan(&base, self.cfg.control, &sc.grid(), sc.step, &self.kernel)
                .stage("scan", || format!("N={n}"))?;
            let push = |rows: &mut Vec<Vec<String>>, s: &FidelityScan, grid: &str| {
                for (i, (&x, &f)) in s.grid.iter().zip(&s.fidelities).enumerate() {
                    rows.push(vec![
                        n.to_string(),
                        fmt_f64(x),
                        fmt_f64(f),
                        u8::from(i == s.argmin_index).to_string(),
                        grid.to_string(),
                    ]);
                }
            };
            push(&mut rows, &coarse, "coarse");
            let best = match sc.refine_spacing {
                Some(fine) => {
                    let r = coarse
                        .refine(fine, sc.spacing, &self.kernel)
                        .stage("scan", || format!("N={n} refinement"))?;
                    push(&mut rows, &r, "fine");
                    r
                }
                None => coarse,
            };
            self.note("scan", format!("N={n} argmin {}", best.argmin));
            scans.push(best);
        }
        let p = self.path("scan.csv", "scan");
        io::write_csv(&p, &self.hash, &["N", "x", "fidelity", "argmin", "grid"], &rows)?;
        Ok(scans)
    }

    pub fn gram(&mut self, n: usize) -> Result<GramMatrix> {
        if let Some(g) = self.grams.get(&n) {
            return Ok(g.clone());
        }
        let set = self.training_set(n)?;
        let g = self.kernel.gram(&set.points).stage("gram", || format!("N={n}"))?;
        self.note("gram", format!("N={n} M={}", g.len()));
        self.grams.insert(n, g.clone());
        Ok(g)
    }

    fn write_gram(&mut self, g: &GramMatrix, stem: &str, kind: &str) -> Result<()> {
        let labels: Vec<String> = g.points.iter().map(|p| self.label(p.control_value(self.cfg.control))).collect();
        let csv = self.path(&format!("{stem}.csv"), kind);
        io::gram_csv(&csv, &self.hash, g, &labels)?;
        let json = self.path(&format!("{stem}.json"), kind);
        let doc = GramDocument {
            gram: g.clone(),
            min_eigenvalue: g.min_eigenvalue(),
        };
        io::write_json(&json, "spinkernel-gram", &self.hash, self.cfg.seed, &doc)
    }

    pub fn write_grams(&mut self) -> Result<()> {
        for n in self.cfg.sizes.clone() {
            let g = self.gram(n)?;
            self.write_gram(&g, &format!("gram-N{n}"), "gram")?;
        }
        Ok(())
    }

    fn shot_config(&self, n: usize) -> Result<ShotConfig> {
        let shots = self
            .cfg
            .shots
            .ok_or_else(|| Error::Config("sampling needs shots".into()))?;
        // a distinct stream per size
        let mut c = ShotConfig::new(shots, self.cfg.seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))?;
        c.sample_diagonal = self.cfg.sample_diagonal;
        Ok(c)
    }

    pub fn sampled(&mut self, n: usize) -> Result<GramMatrix> {
        if let Some(g) = self.sampled.get(&n) {
            return Ok(g.clone());
        }
        let exact = self.gram(n)?;
        let cfg = self.shot_config(n)?;
        let g = swaptest::sample_gram(&exact, &cfg).stage("sample", || format!("N={n}"))?;
        self.note(
            "sample",
            format!("N={n} S={} min eigenvalue {:e}", cfg.shots, g.min_eigenvalue()),
        );
        self.sampled.insert(n, g.clone());
        Ok(g)
    }

    pub fn write_sampled(&mut self) -> Result<()> {
        for n in self.cfg.sizes.clone() {
            let g = self.sampled(n)?;
            self.write_gram(&g, &format!("gram-sampled-N{n}"), "gram-sampled")?;
        }
        Ok(())
    }

    pub fn model(&mut self, n: usize) -> Result<SvmModel> {
        if let Some(m) = self.models.get(&n) {
            return Ok(m.clone());
        }
        let g = if self.cfg.train_on_sampled {
            self.sampled(n)?
        } else {
            self.gram(n)?
        };
        let set = self.training_set(n)?;
        let opts = TrainOptions {
            c: self.cfg.svm_c,
            ..TrainOptions::default()
        };
        let m = svm::train_with(&g, &set, &opts).stage("train", || format!("N={n}"))?;
        self.note(
            "train",
            format!("N={n} {} support vectors, bias {:e}", m.sv_index.len(), m.bias),
        );
        self.models.insert(n, m.clone());
        Ok(m)
    }

    pub fn write_models(&mut self) -> Result<()> {
        for n in self.cfg.sizes.clone() {
            let m = self.model(n)?;
            let p = self.path(&format!("svm-N{n}.json"), "svm");
            io::write_json(&p, "spinkernel-svm", &self.hash, self.cfg.seed, &m)?;
        }
        Ok(())
    }

    pub fn boundary(&mut self, n: usize) -> Result<BoundaryEstimate> {
        if let Some(b) = self.boundaries.get(&n) {
            return Ok(b.clone());
        }
        let m = self.model(n)?;
        let (l, r) = (self.cfg.left_window, self.cfg.right_window);
        let x_star = match svm::boundary(&m, &self.kernel, (l.1, r.0)) {
            Err(Error::NoSignChange { .. }) => svm::boundary(&m, &self.kernel, (l.0, r.1)),
            other => other,
        }
        .stage("boundary", || format!("N={n}"))?;
        let grid = crate::linspace(l.1, r.0, CURVE_POINTS);
        let midpoint = match svm::midpoint_diagnostics(&m, &self.kernel, &grid) {
            Ok(d) => Some(d),
            Err(e) => {
                self.note("boundary", format!("N={n} no midpoint diagnostics: {e}"));
                None
            }
        };
        self.note("boundary", format!("N={n} x*={x_star}"));
        let b = BoundaryEstimate {
            n_sites: n,
            x_star,
            midpoint,
        };
        self.boundaries.insert(n, b.clone());
        Ok(b)
    }

    pub fn write_boundaries(&mut self) -> Result<()> {
        let mut rows = Vec::new();
        for n in self.cfg.sizes.clone() {
            let b = self.boundary(n)?;
            let m = self.model(n)?;
            let mid = b.midpoint.as_ref();
            rows.push(vec![
                self.cfg.preset.name().to_string(),
                n.to_string(),
                self.cfg.kind.name().to_string(),
                fmt_f64(b.x_star),
                fmt_f64(m.bias),
                m.sv_index.len().to_string(),
                mid.map_or("nan".into(), |d| fmt_f64(d.x_left)),
                mid.map_or("nan".into(), |d| fmt_f64(d.x_right)),
                mid.map_or("nan".into(), |d| fmt_f64(d.x_mid)),
                mid.map_or("0".into(), |d| u8::from(d.ambiguous).to_string()),
            ]);

            let (l, r) = (self.cfg.left_window, self.cfg.right_window);
            let xs = crate::linspace(l.0, r.1, CURVE_POINTS);
            let d = m.decision_function(&self.kernel)?;
            let curve: Vec<Vec<String>> = xs
                .iter()
                .map(|&x| Ok(vec![fmt_f64(x), fmt_f64(d.at_control(x)?)]))
                .collect::<Result<_>>()
                .stage("boundary", || format!("N={n} decision curve"))?;
            let p = self.path(&format!("decision-N{n}.csv"), "decision");
            io::write_csv(&p, &self.hash, &["x", "decision"], &curve)?;

            if let Some(md) = mid {
                let rows: Vec<Vec<String>> = md
                    .grid
                    .iter()
                    .zip(md.similarity_left.iter().zip(&md.similarity_right))
                    .map(|(&x, (&a, &b))| vec![fmt_f64(x), fmt_f64(a), fmt_f64(b)])
                    .collect();
                let p = self.path(&format!("midpoint-N{n}.csv"), "midpoint");
                io::write_csv(&p, &self.hash, &["x", "similarity_left", "similarity_right"], &rows)?;
            }
        }
        let p = self.path("boundary.csv", "boundary");
        io::write_csv(
            &p,
            &self.hash,
            &["model", "N", "kind", "x_star", "bias", "n_sv", "x_left", "x_right", "x_mid", "ambiguous"],
            &rows,
        )
    }

    pub fn bounds(&mut self, n: usize) -> Result<BoundsRow> {
        let g = self.gram(n)?;
        let stats = resources::ensemble_stats(&g, self.cfg.include_diagonal).stage("bounds", || format!("N={n}"))?;
        let bounds = resources::shot_bounds(&stats, &self.cfg.bounds).stage("bounds", || format!("N={n}"))?;
        let histogram = resources::kernel_histogram(&g, self.cfg.histogram_bins)?;
        Ok(BoundsRow {
            n_sites: n,
            stats,
            bounds,
            histogram,
        })
    }

    pub fn write_bounds(&mut self) -> Result<Vec<BoundsRow>> {
        let mut out = Vec::new();
        let mut rows = Vec::new();
        let mut hist = Vec::new();
        let bins = self.cfg.histogram_bins;
        for n in self.cfg.sizes.clone() {
            let b = self.bounds(n)?;
            let s = &b.stats;
            let pr = &b.bounds.params;
            let shots = |c: Option<resources::ShotCount>| c.map_or("inf".to_string(), |c| fmt_f64(c.value));
            rows.push(vec![
                self.cfg.preset.name().to_string(),
                fmt_f64(self.cfg.gamma),
                fmt_f64(self.cfg.delta),
                n.to_string(),
                fmt_f64(s.k_repr),
                fmt_f64(s.q1),
                fmt_f64(s.q3),
                fmt_f64(s.iqr),
                shots(b.bounds.s_spread),
                shots(b.bounds.s_ca),
                fmt_f64(pr.epsilon),
                fmt_f64(pr.p_spread),
                fmt_f64(pr.epsilon_ca),
                fmt_f64(pr.p_ca),
            ]);
            for (i, &c) in b.histogram.iter().enumerate() {
                hist.push(vec![
                    n.to_string(),
                    fmt_f64(i as f64 / bins as f64),
                    fmt_f64((i + 1) as f64 / bins as f64),
                    c.to_string(),
                ]);
            }
            self.note("bounds", format!("N={n} k_repr {} iqr {}", s.k_repr, s.iqr));
            out.push(b);
        }
        let p = self.path("bounds.csv", "bounds");
        io::write_csv(
            &p,
            &self.hash,
            &[
                "model", "gamma", "delta", "N", "k_repr", "q1", "q3", "iqr", "s_spread", "s_ca", "epsilon",
                "p_spread", "epsilon_ca", "p_ca",
            ],
            &rows,
        )?;
        let p = self.path("histogram.csv", "histogram");
        io::write_csv(&p, &self.hash, &["N", "bin_lo", "bin_hi", "count"], &hist)?;
        Ok(out)
    }

    pub fn fit(&mut self) -> Result<FitResult> {
        let mut sizes = Vec::new();
        let mut est = Vec::new();
        for n in self.cfg.sizes.clone() {
            sizes.push(n as f64);
            est.push(self.boundary(n)?.x_star);
        }
        let data = DriftData::new(sizes, est, DriftSource::SvmDelta1).stage("fit", || "boundary drift".into())?;
        let r = fss::fit(self.cfg.fit, &data, None).stage("fit", || format!("{:?} form", self.cfg.fit))?;
        self.note("fit", format!("params {:?} sigmas {:?}", r.params, r.sigmas));
        Ok(r)
    }

    pub fn write_fit(&mut self) -> Result<FitResult> {
        let r = self.fit()?;
        let names = r.model.param_names();
        let mut header = vec!["model", "source", "n_points"];
        header.extend(names);
        let sig: Vec<String> = names.iter().map(|n| format!("sigma_{n}")).collect();
        header.extend(sig.iter().map(String::as_str));
        header.extend(["rss", "converged"]);
        let mut row = vec![
            format!("{:?}", r.model).to_lowercase(),
            "svm".to_string(),
            r.n_points.to_string(),
        ];
        row.extend(r.params.iter().map(|&v| fmt_f64(v)));
        row.extend(r.sigmas.iter().map(|&v| fmt_f64(v)));
        row.extend([fmt_f64(r.rss), u8::from(r.converged).to_string()]);
        let p = self.path("fit.csv", "fit");
        io::write_csv(&p, &self.hash, &header, &[row])?;
        let p = self.path("fit.json", "fit");
        io::write_json(&p, "spinkernel-fit", &self.hash, self.cfg.seed, &r)?;
        Ok(r)
    }

    /// Write the manifest of every artifact so far and the timestamped log.
    pub fn finish(&mut self) -> Result<Manifest> {
        let mut manifest = Manifest::new(&self.hash, self.cfg.seed, self.cfg.preset.name());
        for (p, kind) in &self.files {
            manifest.add(&self.out, p, kind)?;
        }
        manifest.write(&self.out.join("manifest.json"))?;
        let mut log = self.log.join("\n");
        log.push('\n');
        fs::write(self.out.join("run.log"), log)?;
        Ok(manifest)
    }
}

pub fn cmd_scan(cfg: RunConfig) -> Result<Vec<FidelityScan>> {
    let mut run = Run::new(cfg)?;
    let s = run.scan()?;
    run.finish()?;
    Ok(s)
}

/// Every stage. The fit is skipped when there are too few sizes for it and
/// logged, not raised, when it fails numerically.
pub fn cmd_pipeline(cfg: RunConfig) -> Result<Manifest> {
    let mut run = Run::new(cfg)?;
    run.scan()?;
    run.write_grams()?;
    if run.cfg.shots.is_some() {
        run.write_sampled()?;
    }
    run.write_models()?;
    run.write_boundaries()?;
    run.write_bounds()?;
    let needed = match run.cfg.fit {
        fss::DriftModel::Power => 3,
        fss::DriftModel::Bkt => 4,
    };
    if run.cfg.sizes.len() >= needed {
        match run.write_fit() {
            Ok(_) => {}
            Err(e @ Error::Stage { stage: "fit", .. }) if !e.is_config_error() => {
                log::warn!("{e}");
                run.note("fit", format!("failed: {e}"));
            }
            Err(e) => return Err(e),
        }
    } else {
        let have = run.cfg.sizes.len();
        run.note("fit", format!("skipped: {have} sizes, {needed} needed"));
    }
    run.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    #[test]
    fn pipeline_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::preset(Preset::Ising);
        cfg.sizes = vec![8, 16, 32, 64];
        cfg.per_side = 4;
        cfg.shots = Some(1000);
        cfg.out_dir = a.path().to_path_buf();
        let ma = cmd_pipeline(cfg.clone()).unwrap();
        cfg.out_dir = b.path().to_path_buf();
        let mb = cmd_pipeline(cfg).unwrap();
        assert_eq!(ma, mb);
        ma.verify(a.path()).unwrap();
        assert!(ma.files.iter().any(|f| f.path == "fit.json"));
        assert!(a.path().join("run.log").exists());
    }
}
