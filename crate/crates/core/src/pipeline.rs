//! Reproducible runs behind the command-line tool.
//!
//! Every command takes a [`PipelineConfig`], writes its files under the
//! configured output directory and returns the text meant for stdout. Reports
//! carry the seed and a hash of the effective configuration, so rows from
//! different configurations are never mixed.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotations::{conflate_ladder, parse_corpus, AnnotatedCorpus, Format, TagColumn};
use crate::error::{Error, Result};
use crate::inlp::{delta_loss, labeled_from_annotation, run_inlp, DeltaConfig, InlpConfig, LossBench, ProbeConfig, ProbeKind};
use crate::itoracle::{run_verification, slope_t_test, RegressionResult};
use crate::seqmodel::{estimate_rho, estimate_rho_given_tokens, token_entropy, EndPolicy, RhoConfig, RhoEstimate};
use crate::sgns::{
    eval_loss, read_raw_tokens_buffered, train_sgns_with_stats, EmbeddingSet, Objective, Optimizer, RefitConfig,
    SgnsConfig, SubsampleRule,
};
use crate::stats::spearman;

pub const TOOL_VERSION: &str = concat!("rhokit ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Whitespace-tokenized raw text for embedding training and loss evaluation.
    pub raw_path: Option<PathBuf>,
    pub annotation_paths: Vec<PathBuf>,
    /// `conllu` or `tsv`.
    pub format: String,
    /// `upos` or `xpos` (alias `fpos`).
    pub tag_column: String,
    /// Saved embeddings, for commands that do not train them.
    pub embeddings_dir: Option<PathBuf>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            raw_path: None,
            annotation_paths: Vec::new(),
            format: "conllu".into(),
            tag_column: "upos".into(),
            embeddings_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoSection {
    pub kn_order: usize,
    pub train_fraction: f64,
    pub heldout_fraction: f64,
    pub token_min_count: u64,
    pub tag_min_count: u64,
    /// `condition` or `predict`.
    pub end_policy: String,
}

impl Default for RhoSection {
    fn default() -> Self {
        let d = RhoConfig::default();
        RhoSection {
            kn_order: d.order,
            train_fraction: d.train_fraction,
            heldout_fraction: d.heldout_fraction,
            token_min_count: d.token_min_count,
            tag_min_count: d.tag_min_count,
            end_policy: "condition".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgnsSection {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub window: usize,
    pub min_count: u64,
    pub subsample_t: f64,
    pub batch: usize,
    /// `sgd` or `adam`.
    pub optimizer: String,
    pub learning_rate: Option<f64>,
    /// `keep` or `discard`.
    pub subsample_rule: String,
}

impl Default for SgnsSection {
    fn default() -> Self {
        let d = SgnsConfig::default();
        SgnsSection {
            dim: d.dim,
            epochs: d.epochs,
            negatives: d.negatives,
            window: d.window,
            min_count: d.min_count,
            subsample_t: d.subsample_t,
            batch: d.batch,
            optimizer: "sgd".into(),
            learning_rate: None,
            subsample_rule: "keep".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InlpSection {
    pub epsilon: f64,
    pub max_iters: Option<usize>,
    /// `logistic` or `hinge`.
    pub probe: String,
    pub l2: f64,
    pub max_epochs: usize,
    pub grad_tolerance: f64,
    pub min_coverage: f64,
}

impl Default for InlpSection {
    fn default() -> Self {
        let p = ProbeConfig::default();
        InlpSection {
            epsilon: 0.01,
            max_iters: None,
            probe: "logistic".into(),
            l2: p.l2,
            max_epochs: p.max_epochs,
            grad_tolerance: p.grad_tolerance,
            min_coverage: DeltaConfig::default().min_coverage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefitSection {
    pub window: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Tail of the raw corpus held out for loss evaluation.
    pub heldout_fraction: f64,
}

impl Default for RefitSection {
    fn default() -> Self {
        let r = RefitConfig::default();
        RefitSection { window: r.window, max_iters: r.max_iters, tolerance: r.tolerance, heldout_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSection {
    /// Run INLP on every `every`-th step; 0 means `ceil(m / 8)` for `m` tags.
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub worlds: usize,
    pub max_alphabet: usize,
    pub decoder_iters: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { worlds: 1000, max_alphabet: 16, decoder_iters: 2000 }
    }
}

/// Settings for every command. File values are overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub threads: usize,
    /// Report entropies in bits instead of nats.
    pub bits: bool,
    pub output_dir: PathBuf,
    pub corpus: CorpusSection,
    pub rho: RhoSection,
    pub sgns: SgnsSection,
    pub inlp: InlpSection,
    pub refit: RefitSection,
    pub ladder: LadderSection,
    pub verify: VerifySection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            threads: 1,
            bits: false,
            output_dir: PathBuf::from("out"),
            corpus: CorpusSection::default(),
            rho: RhoSection::default(),
            sgns: SgnsSection::default(),
            inlp: InlpSection::default(),
            refit: RefitSection::default(),
            ladder: LadderSection::default(),
            verify: VerifySection::default(),
        }
    }
}

fn config_err(message: impl Into<String>) -> Error {
    Error::Config(message.into())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 prefix over the settings that affect results; the output
    /// directory and display units are excluded.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.bits = false;
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(config_err("threads must be positive"));
        }
        let r = &self.rho;
        if !(r.train_fraction > 0.0 && r.heldout_fraction > 0.0 && r.train_fraction + r.heldout_fraction <= 1.0 + 1e-12) {
            return Err(config_err(format!("invalid split fractions {}/{}", r.train_fraction, r.heldout_fraction)));
        }
        if r.kn_order == 0 {
            return Err(config_err("kn_order must be positive"));
        }
        if !(self.refit.heldout_fraction > 0.0 && self.refit.heldout_fraction < 1.0) {
            return Err(config_err("refit.heldout_fraction must be in (0, 1)"));
        }
        self.format()?;
        self.tag_column()?;
        self.end_policy()?;
        self.sgns_config()?;
        self.probe_kind()?;
        Ok(())
    }

    fn format(&self) -> Result<Format> {
        self.corpus.format.parse().map_err(|_| config_err(format!("unknown format '{}'", self.corpus.format)))
    }

    fn tag_column(&self) -> Result<TagColumn> {
        self.corpus.tag_column.parse().map_err(|_| config_err(format!("unknown tag column '{}'", self.corpus.tag_column)))
    }

    fn end_policy(&self) -> Result<EndPolicy> {
        match self.rho.end_policy.as_str() {
            "condition" => Ok(EndPolicy::Condition),
            "predict" => Ok(EndPolicy::Predict),
            other => Err(config_err(format!("unknown end_policy '{other}'"))),
        }
    }

    fn probe_kind(&self) -> Result<ProbeKind> {
        match self.inlp.probe.as_str() {
            "logistic" => Ok(ProbeKind::Logistic),
            "hinge" => Ok(ProbeKind::Hinge),
            other => Err(config_err(format!("unknown probe '{other}'"))),
        }
    }

    pub fn rho_config(&self) -> Result<RhoConfig> {
        Ok(RhoConfig {
            order: self.rho.kn_order,
            train_fraction: self.rho.train_fraction,
            heldout_fraction: self.rho.heldout_fraction,
            token_min_count: self.rho.token_min_count,
            tag_min_count: self.rho.tag_min_count,
            end_policy: self.end_policy()?,
            threads: self.threads,
        })
    }

    pub fn sgns_config(&self) -> Result<SgnsConfig> {
        let s = &self.sgns;
        let optimizer = match s.optimizer.as_str() {
            "sgd" => Optimizer::Sgd { learning_rate: s.learning_rate.unwrap_or(0.025) },
            "adam" => Optimizer::Adam { learning_rate: s.learning_rate.unwrap_or(0.001) },
            other => return Err(config_err(format!("unknown optimizer '{other}'"))),
        };
        let subsample_rule = match s.subsample_rule.as_str() {
            "keep" => SubsampleRule::Keep,
            "discard" => SubsampleRule::Discard,
            other => return Err(config_err(format!("unknown subsample_rule '{other}'"))),
        };
        Ok(SgnsConfig {
            dim: s.dim,
            epochs: s.epochs,
            negatives: s.negatives,
            window: s.window,
            min_count: s.min_count,
            subsample_t: s.subsample_t,
            batch: s.batch,
            seed: self.seed,
            optimizer,
            subsample_rule,
            threads: self.threads,
        })
    }

    pub fn refit_config(&self) -> RefitConfig {
        RefitConfig {
            window: self.refit.window,
            max_iters: self.refit.max_iters,
            tolerance: self.refit.tolerance,
            frozen: true,
            variance_floor: 0.0,
        }
    }

    /// INLP settings for ladder step `step`; the probe seed depends only on
    /// the run seed and the step.
    pub fn delta_config(&self, step: usize) -> Result<DeltaConfig> {
        Ok(DeltaConfig {
            inlp: InlpConfig {
                epsilon: self.inlp.epsilon,
                max_iters: self.inlp.max_iters,
                probe: ProbeConfig {
                    kind: self.probe_kind()?,
                    l2: self.inlp.l2,
                    max_epochs: self.inlp.max_epochs,
                    grad_tolerance: self.inlp.grad_tolerance,
                    seed: self.seed.wrapping_add(step as u64),
                },
            },
            min_coverage: self.inlp.min_coverage,
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| config_err(e.to_string()))
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(config_err(format!("missing file: {}", path.display())))
    }
}

pub fn load_annotation(config: &PipelineConfig, path: &Path) -> Result<AnnotatedCorpus> {
    require_file(path)?;
    let file = fs::File::open(path)?;
    parse_corpus(BufReader::new(file), config.format()?, config.tag_column()?, &path.display().to_string())
}

fn first_annotation(config: &PipelineConfig) -> Result<AnnotatedCorpus> {
    let path = config.corpus.annotation_paths.first().ok_or_else(|| config_err("no annotation path configured"))?;
    load_annotation(config, path)
}

pub fn load_raw_tokens(config: &PipelineConfig) -> Result<Vec<String>> {
    let path = config.corpus.raw_path.as_ref().ok_or_else(|| config_err("no raw corpus path configured"))?;
    require_file(path)?;
    read_raw_tokens_buffered(BufReader::new(fs::File::open(path)?))
}

fn load_embeddings(config: &PipelineConfig) -> Result<EmbeddingSet> {
    let dir = config.corpus.embeddings_dir.as_ref().ok_or_else(|| config_err("no embeddings directory configured"))?;
    if !dir.is_dir() {
        return Err(config_err(format!("missing directory: {}", dir.display())));
    }
    EmbeddingSet::load(dir)
}

/// Splits raw tokens into the part used for training and the held-out tail.
pub fn split_raw(tokens: &[String], heldout_fraction: f64) -> Result<(&[String], &[String])> {
    let held = (tokens.len() as f64 * heldout_fraction).floor() as usize;
    if held == 0 || held >= tokens.len() {
        return Err(Error::CorpusTooSmall(format!("{} raw tokens cannot be split", tokens.len())));
    }
    Ok(tokens.split_at(tokens.len() - held))
}

/// Result of a command: text for stdout, files written and whether a
/// verification check failed.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub stdout: String,
    pub files: Vec<PathBuf>,
    pub verification_failed: bool,
}

impl CommandOutput {
    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }
}

/// Process exit code for an error: 3 for configuration problems (including
/// missing input files), 2 for everything wrong with the input data.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 3,
        _ => 2,
    }
}

fn metadata(config: &PipelineConfig, out: &mut String) {
    let _ = writeln!(out, "# tool={TOOL_VERSION}");
    let _ = writeln!(out, "# seed={}", config.seed);
    let _ = writeln!(out, "# config_hash={}", config.config_hash());
}

fn entropy_value(nats: f64, bits: bool) -> f64 {
    if bits {
        nats / std::f64::consts::LN_2
    } else {
        nats
    }
}

pub fn cmd_rho(config: &PipelineConfig) -> Result<CommandOutput> {
    config.validate()?;
    if config.corpus.annotation_paths.is_empty() {
        return Err(config_err("no annotation path configured"));
    }
    let rho_cfg = config.rho_config()?;
    let unit = if config.bits { "bits" } else { "nats" };
    let mut out = CommandOutput::default();
    let mut tsv = String::new();
    metadata(config, &mut tsv);
    let _ = writeln!(tsv, "source\testimator\trho\th_tags_{unit}\th_tokens_{unit}\ttokens");
    for path in &config.corpus.annotation_paths {
        let corpus = load_annotation(config, path)?;
        let est = estimate_rho(&corpus, &rho_cfg)?;
        let h_t = entropy_value(est.h_tags.nats_per_token, config.bits);
        let h_w = entropy_value(est.h_tokens.nats_per_token, config.bits);
        let _ = writeln!(
            out.stdout,
            "{}\trho={:.6}\tH[T]={h_t:.6}\tH[W]={h_w:.6} {unit}/token ({})",
            path.display(),
            est.rho,
            est.estimator_name
        );
        let _ = writeln!(
            tsv,
            "{}\t{}\t{:.6}\t{h_t:.6}\t{h_w:.6}\t{}",
            path.display(),
            est.estimator_name,
            est.rho,
            est.h_tokens.token_count
        );
    }
    out.write(config.output_dir.join("rho.tsv"), &tsv)?;
    Ok(out)
}

pub fn cmd_conflate(config: &PipelineConfig) -> Result<CommandOutput> {
    config.validate()?;
    let corpus = first_annotation(config)?;
    let ladder = conflate_ladder(&corpus)?;
    let mut out = CommandOutput::default();
    let mut summary = String::new();
    metadata(config, &mut summary);
    let _ = writeln!(summary, "annotation_id\tmerged_a\tmerged_b\tnew_tag\ttags");
    for step in &ladder.steps {
        let (a, b) = &step.merged_pair;
        let _ = writeln!(summary, "{}\t{a}\t{b}\t{}\t{}", step.annotation_id, step.new_tag, step.corpus.distinct_tags());
        out.write(config.output_dir.join(format!("conflate/step_{:03}.tsv", step.annotation_id)), &step.corpus.to_tsv())?;
    }
    out.stdout = summary.clone();
    out.write(config.output_dir.join("conflate/ladder.tsv"), &summary)?;
    Ok(out)
}

pub fn cmd_sgns_train(config: &PipelineConfig) -> Result<CommandOutput> {
    config.validate()?;
    let tokens = load_raw_tokens(config)?;
    let (emb, stats) = train_sgns_with_stats(&tokens, &config.sgns_config()?)?;
    let mut out = CommandOutput::default();
    let dir = config.output_dir.join("embeddings");
    emb.save(&dir)?;
    out.files.push(dir);
    let mut log = String::new();
    metadata(config, &mut log);
    let _ = writeln!(log, "epoch\tloss_nats");
    for (i, l) in stats.epoch_losses.iter().enumerate() {
        let _ = writeln!(log, "{}\t{l:.6}", i + 1);
    }
    let _ = writeln!(out.stdout, "trained {} vectors of dimension {} on {} tokens", emb.len(), emb.dim(), tokens.len());
    out.stdout.push_str(&log);
    out.write(config.output_dir.join("sgns_epochs.tsv"), &log)?;
    Ok(out)
}

pub fn cmd_sgns_eval(config: &PipelineConfig) -> Result<CommandOutput> {
    config.validate()?;
    let emb = load_embeddings(config)?;
    let tokens = load_raw_tokens(config)?;
    let mut out = CommandOutput::default();
    let mut tsv = String::new();
    metadata(config, &mut tsv);
    let unit = if config.bits { "bits" } else { "nats" };
    let _ = writeln!(tsv, "objective\t{unit}_per_prediction\tpredictions");
    for (name, objective) in [("negative_sampling", Objective::NegativeSampling), ("full_softmax", Objective::FullSoftmax)] {
        let r = eval_loss(&emb, &tokens, objective, config.sgns.window, config.sgns.negatives)?;
        let _ = writeln!(tsv, "{name}\t{:.6}\t{}", entropy_value(r.nats_per_prediction, config.bits), r.predictions);
    }
    out.stdout = tsv.clone();
    out.write(config.output_dir.join("sgns_eval.tsv"), &tsv)?;
    Ok(out)
}

pub fn cmd_inlp(config: &PipelineConfig) -> Result<CommandOutput> {
    config.validate()?;
    let emb = load_embeddings(config)?;
    let corpus = first_annotation(config)?;
    let (data, coverage) = labeled_from_annotation(&emb, &corpus)?;
    let result = run_inlp(&data, &config.delta_config(0)?.inlp)?;
    let mut out = CommandOutput::default();
    let _ = writeln!(
        out.stdout,
        "iterations={}\tfinal_acc={:.6}\tmajority={:.6}\tcoverage={coverage:.4}\tconverged={}",
        result.iterations, result.final_probe_accuracy, result.majority, result.converged
    );
    out.write(config.output_dir.join("projections.txt"), &result.stack.to_text())?;
    Ok(out)
}

fn loss_bench(config: &PipelineConfig, emb: EmbeddingSet, tokens: &[String]) -> Result<LossBench> {
    let (train, held) = split_raw(tokens, config.refit.heldout_fraction)?;
    LossBench::new(emb, train, held, config.refit_config())
}

pub fn cmd_delta_loss(config: &PipelineConfig) -> Result<CommandOutput> {
    config.validate()?;
    let emb = load_embeddings(config)?;
    let corpus = first_annotation(config)?;
    let tokens = load_raw_tokens(config)?;
    let rho = estimate_rho(&corpus, &config.rho_config()?)?;
    let bench = loss_bench(config, emb, &tokens)?;
    let d = delta_loss(&bench, &corpus, rho, &config.delta_config(0)?)?;
    let mut out = CommandOutput::default();
    let _ = writeln!(
        out.stdout,
        "rho={:.6}\tdelta_nats={:.6}\tbaseline_nats={:.6}\titerations={}\tconverged={}",
        d.rho.rho, d.delta, bench.baseline_loss, d.result.iterations, d.result.converged
    );
    out.write(config.output_dir.join("projections.txt"), &d.result.stack.to_text())?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderRow {
    pub annotation_id: usize,
    pub rho: f64,
    pub iterations: usize,
    pub final_acc: f64,
    pub majority: f64,
    pub delta_nats: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub annotation_id: usize,
    pub tags: usize,
    pub rho: f64,
    pub delta_nats: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderReport {
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
    pub rows: Vec<LadderRow>,
    pub plot: Vec<PlotPoint>,
}

pub const REPORT_HEADER: &str = "annotation_id\trho\titerations\tfinal_acc\tmajority\tdelta_nats";

impl LadderReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tool={}", self.tool_version);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# config_hash={}", self.config_hash);
        let unconverged: Vec<String> =
            self.rows.iter().filter(|r| !r.converged).map(|r| r.annotation_id.to_string()).collect();
        if !unconverged.is_empty() {
            let _ = writeln!(out, "# unconverged={}", unconverged.join(","));
        }
        let _ = writeln!(out, "{REPORT_HEADER}");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{}\t{:.6}\t{:.6}\t{:.6}",
                r.annotation_id, r.rho, r.iterations, r.final_acc, r.majority, r.delta_nats
            );
        }
        out
    }

    /// `annotation_id<TAB>tags<TAB>rho<TAB>delta_nats`, with `NA` for steps
    /// where INLP was not run.
    pub fn plot_tsv(&self) -> String {
        let mut out = String::from("annotation_id\ttags\trho\tdelta_nats\n");
        for p in &self.plot {
            let delta = p.delta_nats.map_or("NA".to_string(), |d| format!("{d:.6}"));
            let _ = writeln!(out, "{}\t{}\t{:.6}\t{delta}", p.annotation_id, p.tags, p.rho);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut seed = None;
        let mut hash = None;
        let mut tool = String::new();
        let mut unconverged: Vec<usize> = Vec::new();
        let mut header_seen = false;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(meta) = line.strip_prefix("# ") {
                let Some((key, value)) = meta.split_once('=') else { continue };
                match key {
                    "seed" => seed = Some(value.parse().map_err(|_| Error::parse(n, "bad seed"))?),
                    "config_hash" => hash = Some(value.to_string()),
                    "tool" => tool = value.to_string(),
                    "unconverged" => {
                        unconverged = value
                            .split(',')
                            .map(|s| s.parse().map_err(|_| Error::parse(n, "bad unconverged list")))
                            .collect::<Result<_>>()?;
                    }
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != REPORT_HEADER {
                    return Err(Error::parse(n, format!("expected header '{REPORT_HEADER}'")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(Error::parse(n, format!("expected 6 columns, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::parse(n, format!("bad number '{s}'")));
            let annotation_id = f[0].parse().map_err(|_| Error::parse(n, "bad annotation_id"))?;
            rows.push(LadderRow {
                annotation_id,
                rho: num(f[1])?,
                iterations: f[2].parse().map_err(|_| Error::parse(n, "bad iterations"))?,
                final_acc: num(f[3])?,
                majority: num(f[4])?,
                delta_nats: num(f[5])?,
                converged: true,
            });
        }
        if !header_seen {
            return Err(Error::parse(1, "missing report header"));
        }
        for r in rows.iter_mut() {
            r.converged = !unconverged.contains(&r.annotation_id);
        }
        Ok(LadderReport {
            seed: seed.ok_or_else(|| Error::parse(1, "missing seed metadata"))?,
            config_hash: hash.ok_or_else(|| Error::parse(1, "missing config_hash metadata"))?,
            tool_version: tool,
            rows,
            plot: Vec::new(),
        })
    }
}

/// Steps that get INLP and a loss measurement: every `every`-th plus the last.
pub fn selected_steps(m: usize, every: usize) -> Vec<usize> {
    let every = if every == 0 { m.div_ceil(8).max(1) } else { every };
    let mut ids: Vec<usize> = (0..m).step_by(every).collect();
    if m > 0 && ids.last() != Some(&(m - 1)) {
        ids.push(m - 1);
    }
    ids
}

/// Conflation ladder with rho for every step and INLP removal plus loss
/// increase for the selected steps. Deterministic for a fixed seed when
/// embeddings are trained single-threaded; steps may run in parallel.
pub fn run_ladder(config: &PipelineConfig, annotated: &AnnotatedCorpus, raw_tokens: &[String]) -> Result<LadderReport> {
    config.validate()?;
    let rho_cfg = config.rho_config()?;
    let mut steps: Vec<(usize, AnnotatedCorpus)> = vec![(0, annotated.clone())];
    if annotated.distinct_tags() > 1 {
        steps.extend(conflate_ladder(annotated)?.steps.into_iter().map(|s| (s.annotation_id, s.corpus)));
    }
    let pool = config.pool()?;
    let h_tokens = token_entropy(annotated, &rho_cfg)?;
    let rhos: Vec<RhoEstimate> = pool.install(|| {
        steps.par_iter().map(|(_, c)| estimate_rho_given_tokens(c, h_tokens, &rho_cfg)).collect::<Result<_>>()
    })?;

    let (train, _) = split_raw(raw_tokens, config.refit.heldout_fraction)?;
    let emb = crate::sgns::train_sgns(train, &config.sgns_config()?)?;
    let bench = loss_bench(config, emb, raw_tokens)?;

    let selected = selected_steps(steps.len(), config.ladder.every);
    let rows: Vec<LadderRow> = pool.install(|| {
        selected
            .par_iter()
            .map(|&id| {
                let d = delta_loss(&bench, &steps[id].1, rhos[id].clone(), &config.delta_config(id)?)?;
                Ok(LadderRow {
                    annotation_id: id,
                    rho: d.rho.rho,
                    iterations: d.result.iterations,
                    final_acc: d.result.final_probe_accuracy,
                    majority: d.result.majority,
                    delta_nats: d.delta,
                    converged: d.result.converged,
                })
            })
            .collect::<Result<_>>()
    })?;

    let plot = steps
        .iter()
        .zip(&rhos)
        .map(|((id, c), r)| PlotPoint {
            annotation_id: *id,
            tags: c.distinct_tags(),
            rho: r.rho,
            delta_nats: rows.iter().find(|row| row.annotation_id == *id).map(|row| row.delta_nats),
        })
        .collect();
    Ok(LadderReport {
        seed: config.seed,
        config_hash: config.config_hash(),
        tool_version: TOOL_VERSION.to_string(),
        rows,
        plot,
    })
}

pub fn cmd_ladder(config: &PipelineConfig) -> Result<CommandOutput> {
    config.validate()?;
    let annotated = first_annotation(config)?;
    let raw = load_raw_tokens(config)?;
    let report = run_ladder(config, &annotated, &raw)?;
    let mut out = CommandOutput::default();
    let tsv = report.to_tsv();
    out.write(config.output_dir.join("ladder_report.tsv"), &tsv)?;
    out.write(config.output_dir.join("ladder_plot.tsv"), &report.plot_tsv())?;
    out.stdout = tsv;
    Ok(out)
}

/// Largest defect of a stored projector: idempotence, symmetry or eigenvalues
/// away from {0, 1}.
pub fn check_projection_file(path: &Path) -> Result<f64> {
    require_file(path)?;
    let stack = crate::inlp::ProjectionStack::from_text(&fs::read_to_string(path)?)?;
    let mut worst: f64 = 0.0;
    for p in stack.projections.iter().chain(std::iter::once(&stack.composed)) {
        let (a, b, c) = crate::inlp::projector_defects(p);
        worst = worst.max(a).max(b).max(c);
    }
    Ok(worst)
}

pub const PROJECTOR_TOL: f64 = 1e-8;

/// Exact-enumeration checks on seeded random worlds, plus optional checks of
/// stored projectors.
pub fn cmd_verify(config: &PipelineConfig, projection_files: &[PathBuf]) -> Result<CommandOutput> {
    config.validate()?;
    let v = &config.verify;
    let mut out = CommandOutput::default();
    if v.worlds == 0 && projection_files.is_empty() {
        return Err(Error::invalid("nothing to verify"));
    }
    if v.worlds > 0 {
        let report = run_verification(v.worlds, config.seed, v.max_alphabet, v.decoder_iters)?;
        let mut tsv = String::new();
        metadata(config, &mut tsv);
        let _ = writeln!(tsv, "world_id\trho\tsigma\tdelta_I\tbound\tholds");
        tsv.push_str(&report.to_tsv());
        out.write(config.output_dir.join("verify.tsv"), &tsv)?;
        let _ = writeln!(
            out.stdout,
            "worlds={}\tproperty_failures={}\tmax_residual={:.3e}\tlemma1_applicable={}\tlemma1_violations={}\tlemma2_converged={}\tlemma2_failures={}",
            report.rows.len(),
            report.property_failures(),
            report.max_property_residual(),
            report.lemma1_applicable(),
            report.lemma1_violations(),
            report.lemma2_converged(),
            report.lemma2_failures()
        );
        out.verification_failed |= !report.passed();
    }
    for path in projection_files {
        let defect = check_projection_file(path)?;
        let ok = defect <= PROJECTOR_TOL;
        let _ = writeln!(out.stdout, "{}\tprojector_defect={defect:.3e}\t{}", path.display(), if ok { "ok" } else { "FAILED" });
        out.verification_failed |= !ok;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressOutcome {
    pub regression: RegressionResult,
    pub spearman: f64,
    pub config_hash: String,
}

/// Regresses `delta_nats` on `rho` over the rows of one or more reports with
/// the same configuration hash.
pub fn regress_reports(reports: &[LadderReport]) -> Result<RegressOutcome> {
    let first = reports.first().ok_or_else(|| Error::invalid("no reports"))?;
    if let Some(other) = reports.iter().find(|r| r.config_hash != first.config_hash) {
        return Err(Error::invalid(format!(
            "reports from different configurations ({} vs {})",
            first.config_hash, other.config_hash
        )));
    }
    let points: Vec<(f64, f64)> = reports.iter().flat_map(|r| r.rows.iter().map(|row| (row.rho, row.delta_nats))).collect();
    let regression = slope_t_test(&points)?;
    let (x, y): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
    Ok(RegressOutcome { regression, spearman: spearman(&x, &y)?, config_hash: first.config_hash.clone() })
}

pub fn cmd_regress(report_paths: &[PathBuf]) -> Result<CommandOutput> {
    if report_paths.is_empty() {
        return Err(Error::invalid("no report given"));
    }
    let mut reports = Vec::new();
    for path in report_paths {
        if !path.is_file() {
            return Err(Error::invalid(format!("missing report: {}", path.display())));
        }
        reports.push(LadderReport::from_tsv(&fs::read_to_string(path)?)?);
    }
    let r = regress_reports(&reports)?;
    let g = r.regression;
    let mut out = CommandOutput::default();
    let _ = writeln!(
        out.stdout,
        "n={}\tslope={:.6}\tintercept={:.6}\tt={:.4}\tp_value={:.3e}\tspearman={:.4}",
        g.n, g.slope, g.intercept, g.t_statistic, g.p_value, r.spearman
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selected_steps_rule() {
        assert_eq!(selected_steps(1, 0), vec![0]);
        assert_eq!(selected_steps(14, 0), vec![0, 2, 4, 6, 8, 10, 12, 13]);
        assert_eq!(selected_steps(8, 0), (0..8).collect::<Vec<_>>());
        assert_eq!(selected_steps(17, 0), vec![0, 3, 6, 9, 12, 15, 16]);
        assert_eq!(selected_steps(5, 10), vec![0, 4]);
    }

    #[test]
    fn config_round_trip_and_hash() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let moved = PipelineConfig { output_dir: "elsewhere".into(), bits: true, ..cfg.clone() };
        assert_eq!(moved.config_hash(), cfg.config_hash());
        let reseeded = PipelineConfig { seed: 7, ..cfg.clone() };
        assert_ne!(reseeded.config_hash(), cfg.config_hash());
    }

    #[test]
    fn sections_and_errors() {
        let cfg = PipelineConfig::from_toml("seed = 3\n[rho]\nkn_order = 4\n[sgns]\ndim = 20\n").unwrap();
        assert_eq!((cfg.seed, cfg.rho.kn_order, cfg.sgns.dim), (3, 4, 20));
        assert_eq!(cfg.sgns.epochs, SgnsConfig::default().epochs);
        assert!(matches!(PipelineConfig::from_toml("[rho]\nbogus = 1\n"), Err(Error::Config(_))));
        let bad = PipelineConfig { rho: RhoSection { train_fraction: 0.95, ..RhoSection::default() }, ..PipelineConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = PipelineConfig { corpus: CorpusSection { format: "xml".into(), ..CorpusSection::default() }, ..PipelineConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    fn report(hash: &str, rows: &[(f64, f64)]) -> LadderReport {
        LadderReport {
            seed: 42,
            config_hash: hash.into(),
            tool_version: TOOL_VERSION.into(),
            rows: rows
                .iter()
                .enumerate()
                .map(|(i, &(rho, delta_nats))| LadderRow {
                    annotation_id: i,
                    rho,
                    iterations: 1,
                    final_acc: 0.5,
                    majority: 0.5,
                    delta_nats,
                    converged: i != 1,
                })
                .collect(),
            plot: Vec::new(),
        }
    }

    #[test]
    fn report_round_trip() {
        let r = report("abc", &[(0.5, 0.2), (0.25, 0.1), (0.0, 0.0)]);
        let text = r.to_tsv();
        assert!(text.contains("# unconverged=1\n"));
        let back = LadderReport::from_tsv(&text).unwrap();
        assert_eq!(back.rows, r.rows);
        assert_eq!(back.config_hash, "abc");
        assert!(LadderReport::from_tsv("# seed=1\n# config_hash=x\nbad header\n").is_err());
        assert!(LadderReport::from_tsv(&text.replace("0.200000", "oops")).is_err());
    }

    #[test]
    fn regression_rules() {
        let good = report("h", &[(0.1, 0.05), (0.2, 0.11), (0.3, 0.14), (0.4, 0.22)]);
        let r = regress_reports(&[good.clone()]).unwrap();
        assert!(r.regression.slope > 0.0 && r.regression.p_value < 0.05 && r.spearman == 1.0);
        assert!(regress_reports(&[good.clone(), report("other", &[(0.1, 0.1)])]).is_err());
        assert!(matches!(regress_reports(&[report("h", &[(0.3, 0.1), (0.3, 0.2), (0.3, 0.3)])]), Err(Error::DegenerateRegressor)));
        assert!(regress_reports(&[report("h", &[(0.1, 0.1), (0.2, 0.2)])]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 3);
        assert_eq!(exit_code(&Error::parse(1, "x")), 2);
        let cfg = PipelineConfig { corpus: CorpusSection { annotation_paths: vec!["/no/such/file".into()], ..CorpusSection::default() }, ..PipelineConfig::default() };
        assert_eq!(exit_code(&cmd_rho(&cfg).unwrap_err()), 3);
    }

    #[test]
    fn verify_nothing() {
        let cfg = PipelineConfig { verify: VerifySection { worlds: 0, ..VerifySection::default() }, ..PipelineConfig::default() };
        let err = cmd_verify(&cfg, &[]).unwrap_err();
        assert!(err.to_string().contains("nothing to verify"));
    }
}
