//! End-to-end orchestration.
//!
//! Each stage reads its inputs from the output directory and persists its
//! results there, so stages can run in separate processes and resume; the
//! monolithic [`run_pipeline`] simply calls the stage functions in order,
//! which makes stage-wise and monolithic execution identical by
//! construction.
//!
//! Artifacts, in production order: `manifest.json`, `dataset_manifest.json`,
//! `graph.edges` + `features.csv` (+ `gt_groups.json`), `mhgae_model.json`,
//! `node_errors.csv`, `anchors.json`, `groups.json`, `tpgcl_model.json`,
//! `embeddings.csv`, `verdicts.csv`, `report.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datagen::{standard_benchmark, standard_spec, InjectionSpec};
use crate::graph::{
    build_target, load_graph, load_gt_groups, save_graph, save_gt_groups, AttributedGraph,
    TargetKind,
};
use crate::mhgae::{
    load_anchors, save_anchors, save_errors_csv, select_anchor_nodes, train_mhgae, MhGaeConfig,
};
use crate::sampler::{load_groups, sample_candidate_groups, save_groups, SamplerConfig};
use crate::scoring::{
    ecod_scores, evaluate_groups, save_report, save_verdicts_csv, threshold_predict, EvalConfig,
    EvalReport, GroupVerdict,
};
use crate::tpgcl::{embed_all, load_embeddings_csv, save_embeddings_csv, train_tpgcl, TpgclConfig};

pub const MANIFEST: &str = "manifest.json";
pub const DATASET_MANIFEST: &str = "dataset_manifest.json";
pub const EDGES: &str = "graph.edges";
pub const FEATURES: &str = "features.csv";
pub const GT_GROUPS: &str = "gt_groups.json";
pub const MHGAE_MODEL: &str = "mhgae_model.json";
pub const NODE_ERRORS: &str = "node_errors.csv";
pub const ANCHORS: &str = "anchors.json";
pub const GROUPS: &str = "groups.json";
pub const TPGCL_MODEL: &str = "tpgcl_model.json";
pub const EMBEDDINGS: &str = "embeddings.csv";
pub const VERDICTS: &str = "verdicts.csv";
pub const REPORT: &str = "report.json";

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}: missing artifact {path}; run the `{produced_by}` stage first")]
    MissingArtifact { stage: &'static str, path: PathBuf, produced_by: &'static str },
    #[error("stage {stage}: {msg}")]
    Stage { stage: &'static str, msg: String },
}

fn serr<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, msg: e.to_string() }
}

fn require(
    stage: &'static str,
    path: PathBuf,
    produced_by: &'static str,
) -> Result<PathBuf, PipelineError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact { stage, path, produced_by })
    }
}

/// Where the input graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    /// Generate the standard synthetic benchmark from the pipeline seed.
    Benchmark,
    /// Load an edge list and attribute CSV; ground truth is optional.
    Files {
        edges: PathBuf,
        features: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gt_groups: Option<PathBuf>,
    },
}

/// Which vectors the detector scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Contrastively trained group embeddings.
    Tpgcl,
    /// Ablation: the mean of each group's raw attribute rows.
    MeanAttrs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub input: InputConfig,
    /// Master seed; stages derive their own seeds from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub target: TargetKind,
    /// Row-normalize attributes (unit L2) before the two GCN encoders.
    /// Raw attribute scales can saturate the sigmoid structure decoder.
    pub normalize_features: bool,
    pub mhgae: MhGaeConfig,
    /// Fraction of nodes kept as anchors (top reconstruction errors).
    pub anchor_fraction: f64,
    pub sampler: SamplerConfig,
    pub tpgcl: TpgclConfig,
    pub embedding_mode: EmbeddingMode,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            input: InputConfig::Benchmark,
            seed: 0,
            out_dir: PathBuf::from("out"),
            target: TargetKind::OverlapWeighted { lambda: 1.0 },
            normalize_features: true,
            mhgae: MhGaeConfig::default(),
            anchor_fraction: 0.10,
            sampler: SamplerConfig::default(),
            tpgcl: TpgclConfig::default(),
            embedding_mode: EmbeddingMode::Tpgcl,
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.anchor_fraction > 0.0 && self.anchor_fraction <= 1.0) {
            return bad(format!("anchor_fraction must be in (0, 1], got {}", self.anchor_fraction));
        }
        match self.target {
            TargetKind::KHop { k } if k == 0 => return bad("khop target needs k >= 1".into()),
            TargetKind::OverlapWeighted { lambda } if !lambda.is_finite() || lambda < 0.0 => {
                return bad(format!("overlap lambda must be finite and nonnegative, got {lambda}"))
            }
            _ => {}
        }
        self.mhgae.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.tpgcl.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let s = &self.sampler;
        if s.tree_depth < 1 || s.max_path_len < 1 || s.max_tree_nodes < 1 || s.max_cycle_len < 3 {
            return bad(format!("sampler limits out of range: {s:?}"));
        }
        if !(self.eval.contamination > 0.0 && self.eval.contamination < 1.0) {
            return bad(format!("contamination must be in (0, 1), got {}", self.eval.contamination));
        }
        if !(self.eval.match_overlap > 0.0 && self.eval.match_overlap <= 1.0) {
            return bad(format!("match_overlap must be in (0, 1], got {}", self.eval.match_overlap));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn mhgae_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    fn tpgcl_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
}

/// Provenance record written at the start of every run.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub library_version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: PipelineConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DatasetManifest {
    Benchmark { benchmark_seed: u64, injection: InjectionSpec },
    Files { edges: PathBuf, features: PathBuf, gt_groups: Option<PathBuf> },
}

fn write_json<T: Serialize>(
    stage: &'static str,
    value: &T,
    path: &Path,
) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(serr(stage))?;
    fs::write(path, text + "\n").map_err(serr(stage))
}

fn load_graph_artifacts(
    stage: &'static str,
    cfg: &PipelineConfig,
) -> Result<AttributedGraph, PipelineError> {
    let edges = require(stage, cfg.artifact(EDGES), "generate")?;
    let features = require(stage, cfg.artifact(FEATURES), "generate")?;
    load_graph(edges, features).map_err(serr(stage))
}

/// Materialize the input graph (generated or copied from files) plus the
/// run manifest into the output directory.
pub fn stage_generate(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    const STAGE: &str = "generate";
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(serr(STAGE))?;
    let manifest = Manifest {
        schema_version: cfg.schema_version,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_sha256: cfg.sha256(),
        config: cfg.clone(),
    };
    write_json(STAGE, &manifest, &cfg.artifact(MANIFEST))?;

    match &cfg.input {
        InputConfig::Benchmark => {
            let bench = standard_benchmark(cfg.seed).map_err(serr(STAGE))?;
            save_graph(&bench.graph, cfg.artifact(EDGES), cfg.artifact(FEATURES))
                .map_err(serr(STAGE))?;
            save_gt_groups(&bench.gt_groups, cfg.artifact(GT_GROUPS)).map_err(serr(STAGE))?;
            let ds = DatasetManifest::Benchmark {
                benchmark_seed: cfg.seed,
                injection: standard_spec(cfg.seed),
            };
            write_json(STAGE, &ds, &cfg.artifact(DATASET_MANIFEST))?;
            log::info!(
                "generated benchmark: {} nodes, {} edges, {} gt groups",
                bench.graph.n(),
                bench.graph.edges().len(),
                bench.gt_groups.len()
            );
        }
        InputConfig::Files { edges, features, gt_groups } => {
            let g = load_graph(edges, features).map_err(serr(STAGE))?;
            save_graph(&g, cfg.artifact(EDGES), cfg.artifact(FEATURES)).map_err(serr(STAGE))?;
            if let Some(gt_path) = gt_groups {
                let gt = load_gt_groups(gt_path).map_err(serr(STAGE))?;
                for group in &gt {
                    if let Some(&v) = group.nodes.iter().find(|&&v| v >= g.n()) {
                        return Err(PipelineError::Stage {
                            stage: STAGE,
                            msg: format!("gt group node {v} out of range for {} nodes", g.n()),
                        });
                    }
                }
                save_gt_groups(&gt, cfg.artifact(GT_GROUPS)).map_err(serr(STAGE))?;
            }
            let ds = DatasetManifest::Files {
                edges: edges.clone(),
                features: features.clone(),
                gt_groups: gt_groups.clone(),
            };
            write_json(STAGE, &ds, &cfg.artifact(DATASET_MANIFEST))?;
            log::info!("loaded graph: {} nodes, {} edges", g.n(), g.edges().len());
        }
    }
    Ok(())
}

/// Train the autoencoder against the configured reconstruction target and
/// persist the model, per-node errors, and selected anchors.
pub fn stage_train_mhgae(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    const STAGE: &str = "train-mhgae";
    cfg.validate()?;
    let mut g = load_graph_artifacts(STAGE, cfg)?;
    if cfg.normalize_features {
        g = g.unit_norm_attrs();
    }
    let target = build_target(&g, cfg.target).map_err(serr(STAGE))?;
    let trained = train_mhgae(&g, &target, &cfg.mhgae, cfg.mhgae_seed()).map_err(serr(STAGE))?;
    crate::mhgae::save_model(&trained.model, cfg.mhgae_seed(), cfg.artifact(MHGAE_MODEL))
        .map_err(serr(STAGE))?;
    save_errors_csv(&trained.errors, cfg.artifact(NODE_ERRORS)).map_err(serr(STAGE))?;
    let anchors = select_anchor_nodes(&trained.errors.r, cfg.anchor_fraction).map_err(serr(STAGE))?;
    save_anchors(&anchors, cfg.artifact(ANCHORS)).map_err(serr(STAGE))?;
    log::info!(
        "trained autoencoder: final loss {:.6}, {} anchors",
        trained.loss_history.last().copied().unwrap_or(f64::NAN),
        anchors.len()
    );
    Ok(())
}

/// Sample candidate groups from the anchors.
pub fn stage_sample(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    const STAGE: &str = "sample";
    cfg.validate()?;
    let g = load_graph_artifacts(STAGE, cfg)?;
    let anchors_path = require(STAGE, cfg.artifact(ANCHORS), "train-mhgae")?;
    let anchors = load_anchors(anchors_path, g.n()).map_err(serr(STAGE))?;
    let groups = sample_candidate_groups(&g, &anchors, &cfg.sampler).map_err(serr(STAGE))?;
    save_groups(&groups, cfg.artifact(GROUPS)).map_err(serr(STAGE))?;
    log::info!("sampled {} candidate groups from {} anchors", groups.len(), anchors.len());
    Ok(())
}

/// Produce one embedding per candidate group: contrastively trained, or
/// plain attribute means in the ablation mode.
pub fn stage_train_tpgcl(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    const STAGE: &str = "train-tpgcl";
    cfg.validate()?;
    let g = load_graph_artifacts(STAGE, cfg)?;
    let groups_path = require(STAGE, cfg.artifact(GROUPS), "sample")?;
    let groups = load_groups(groups_path).map_err(serr(STAGE))?;
    let embeddings = match cfg.embedding_mode {
        EmbeddingMode::Tpgcl => {
            let g = if cfg.normalize_features { g.unit_norm_attrs() } else { g.clone() };
            let trained =
                train_tpgcl(&groups, &g, &cfg.tpgcl, cfg.tpgcl_seed()).map_err(serr(STAGE))?;
            crate::tpgcl::save_model(&trained.model, cfg.tpgcl_seed(), cfg.artifact(TPGCL_MODEL))
                .map_err(serr(STAGE))?;
            log::info!(
                "trained contrastive encoder: final mean batch loss {:.6}",
                trained.loss_history.last().copied().unwrap_or(f64::NAN)
            );
            embed_all(&trained.model, &groups, &g).map_err(serr(STAGE))?
        }
        EmbeddingMode::MeanAttrs => {
            let d = g.dim();
            groups
                .iter()
                .map(|grp| {
                    let mut mean = vec![0.0; d];
                    for &v in &grp.nodes {
                        for (m, &x) in mean.iter_mut().zip(g.x().row(v)) {
                            *m += x;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= grp.nodes.len() as f64);
                    mean
                })
                .collect()
        }
    };
    save_embeddings_csv(&embeddings, cfg.artifact(EMBEDDINGS)).map_err(serr(STAGE))?;
    Ok(())
}

/// Score embeddings and threshold them into predictions (no ground truth).
pub fn stage_score(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    const STAGE: &str = "score";
    cfg.validate()?;
    let emb_path = require(STAGE, cfg.artifact(EMBEDDINGS), "train-tpgcl")?;
    let embeddings = load_embeddings_csv(emb_path).map_err(serr(STAGE))?;
    let scores = ecod_scores(&embeddings).map_err(serr(STAGE))?;
    let (tau, predicted) = threshold_predict(&scores, cfg.eval.contamination).map_err(serr(STAGE))?;
    let verdicts: Vec<GroupVerdict> = scores
        .iter()
        .zip(&predicted)
        .enumerate()
        .map(|(i, (&score, &p))| GroupVerdict {
            group_id: i,
            embedding: Vec::new(),
            score,
            predicted: p,
            gt_label: None,
        })
        .collect();
    save_verdicts_csv(&verdicts, cfg.artifact(VERDICTS)).map_err(serr(STAGE))?;
    log::info!(
        "flagged {}/{} groups at tau {tau:.6}",
        predicted.iter().filter(|&&p| p).count(),
        predicted.len()
    );
    Ok(())
}

/// Score embeddings against ground truth; writes labeled verdicts and the
/// final report.
pub fn stage_evaluate(cfg: &PipelineConfig) -> Result<EvalReport, PipelineError> {
    const STAGE: &str = "evaluate";
    cfg.validate()?;
    let emb_path = require(STAGE, cfg.artifact(EMBEDDINGS), "train-tpgcl")?;
    let embeddings = load_embeddings_csv(emb_path).map_err(serr(STAGE))?;
    let groups_path = require(STAGE, cfg.artifact(GROUPS), "sample")?;
    let groups = load_groups(groups_path).map_err(serr(STAGE))?;
    let gt_path = require(STAGE, cfg.artifact(GT_GROUPS), "generate")?;
    let gt = load_gt_groups(gt_path).map_err(serr(STAGE))?;

    let group_sets: Vec<Vec<usize>> = groups.iter().map(|g| g.sorted_nodes()).collect();
    let gt_sets: Vec<Vec<usize>> = gt.iter().map(|g| g.nodes.clone()).collect();
    let eval =
        evaluate_groups(&group_sets, &embeddings, &gt_sets, &cfg.eval).map_err(serr(STAGE))?;
    save_verdicts_csv(&eval.verdicts, cfg.artifact(VERDICTS)).map_err(serr(STAGE))?;
    save_report(&eval.report, cfg.artifact(REPORT)).map_err(serr(STAGE))?;
    Ok(eval.report)
}

#[derive(Debug)]
pub struct PipelineOutcome {
    /// Present when ground truth was available.
    pub report: Option<EvalReport>,
    /// One-screen human-readable run summary.
    pub summary: String,
}

fn summarize(
    cfg: &PipelineConfig,
    report: Option<&EvalReport>,
) -> Result<String, PipelineError> {
    const STAGE: &str = "summary";
    let g = load_graph_artifacts(STAGE, cfg)?;
    let anchors = load_anchors(cfg.artifact(ANCHORS), g.n()).map_err(serr(STAGE))?;
    let groups = load_groups(cfg.artifact(GROUPS)).map_err(serr(STAGE))?;
    let verdict_text =
        fs::read_to_string(cfg.artifact(VERDICTS)).map_err(serr(STAGE))?;
    let flagged = verdict_text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2) == Some("true"))
        .count();
    let input = match &cfg.input {
        InputConfig::Benchmark => format!("benchmark(seed {})", cfg.seed),
        InputConfig::Files { edges, .. } => format!("files({})", edges.display()),
    };
    let mut s = String::new();
    s.push_str(&format!(
        "input: {input} -> {} nodes, {} edges\n",
        g.n(),
        g.edges().len()
    ));
    s.push_str(&format!(
        "anchors: {} (fraction {})   candidate groups: {}\n",
        anchors.len(),
        cfg.anchor_fraction,
        groups.len()
    ));
    s.push_str(&format!(
        "flagged: {flagged}/{} (contamination {})\n",
        groups.len(),
        cfg.eval.contamination
    ));
    match report {
        Some(r) => {
            let auc = r.auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into());
            s.push_str(&format!(
                "CR {:.4}   F1 {:.4}   AUC {auc}   tau {:.4}\n",
                r.cr, r.f1, r.tau
            ));
        }
        None => s.push_str("no ground truth provided; evaluation skipped\n"),
    }
    Ok(s)
}

/// All stages in order; evaluation runs only when ground truth exists.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    stage_generate(cfg)?;
    stage_train_mhgae(cfg)?;
    stage_sample(cfg)?;
    stage_train_tpgcl(cfg)?;
    stage_score(cfg)?;
    let report = if cfg.artifact(GT_GROUPS).exists() {
        Some(stage_evaluate(cfg)?)
    } else {
        None
    };
    let summary = summarize(cfg, report.as_ref())?;
    Ok(PipelineOutcome { report, summary })
}
