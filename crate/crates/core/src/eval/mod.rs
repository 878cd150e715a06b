//! Accuracy metrics, experiment configs and engine comparison reports.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{generate_synthetic, load_csv, split_dataset, Dataset, TokenSet, Tokenizer};
use crate::error::{Error, Result};
use crate::heproto::{self, HeConfig, LatticeParams, Protocol, QueryCounts, TranscriptMode};
use crate::p4join::{self, fingerprint_all, sort_by_cardinality, FilterToggles, FingerprintParams};
use crate::pairs::{read_pairs_file, MatchPair, PairSet};
use crate::ppjoin::{build_ordering, full_compare_scoped, ppjoin, prepare_records, JoinScope};
use crate::threshold::Threshold;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub true_pairs: usize,
    pub found_pairs: usize,
    pub correct_pairs: usize,
    /// Nothing was found, so precision is reported as 0.
    pub precision_undefined: bool,
    /// The truth is empty, so recall is reported as 0.
    pub recall_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Precision, recall and F-score of `found` against `truth`, by record ids.
pub fn score(found: &PairSet, truth: &PairSet) -> Metrics {
    let correct_pairs = found.intersection(truth).count();
    let (precision, precision_undefined) = ratio(correct_pairs, found.len());
    let (recall, recall_undefined) = ratio(correct_pairs, truth.len());
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        precision,
        recall,
        f_score,
        true_pairs: truth.len(),
        found_pairs: found.len(),
        correct_pairs,
        precision_undefined,
        recall_undefined,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Ppjoin,
    P4join,
    Heppjoin,
    /// Private set intersection on every cross-owner pair.
    Hejaccard,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Ppjoin, Engine::P4join, Engine::Heppjoin, Engine::Hejaccard];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Ppjoin => "ppjoin",
            Engine::P4join => "p4join",
            Engine::Heppjoin => "heppjoin",
            Engine::Hejaccard => "hejaccard",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Engine::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown engine {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    /// The generator's duplicate pairs; needs a synthetic corpus.
    #[default]
    Generated,
    /// Every cross-owner pair with Jaccard similarity at least `t`.
    Jaccard,
}

/// One experiment, as read from a flat TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub engine: Engine,
    pub t: Threshold,
    pub seed: u64,

    pub originals: usize,
    pub duplicates: usize,
    pub corruption_rate: f64,
    /// CSV files, one per owner; replaces the generator when non-empty.
    pub inputs: Vec<PathBuf>,
    pub id_column: String,
    pub text_columns: Vec<String>,
    pub truth: TruthSource,
    /// Two-column pair CSV; overrides `truth`.
    pub truth_file: Option<PathBuf>,
    pub gram: usize,
    /// `all_pairs` also matches records of the same owner; plaintext
    /// engines only.
    pub scope: JoinScope,

    pub k: usize,
    /// Defaults to the optimal length for the corpus' distinct tokens.
    pub l: Option<usize>,
    pub filters: bool,
    pub key_f: Option<String>,
    pub key_g: Option<String>,

    /// Owners for a generated corpus; owner 0 always holds the duplicates.
    pub parties: usize,
    pub threshold: Option<usize>,
    pub backend: String,
    pub in_flight: usize,
    pub multiplicative_depth: Option<u32>,
    pub plaintext_modulus: Option<u64>,
    pub sigma: Option<f64>,
    pub security_bits: Option<u32>,
    /// NDJSON file for the host transcript of an HE-PPJoin run.
    pub transcript: Option<PathBuf>,
    /// Audit the HE-PPJoin transcript and fail the run on violations.
    pub audit: bool,

    /// Report zero wall times so that reports compare byte for byte.
    pub deterministic: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            engine: Engine::Ppjoin,
            t: Threshold::new(1, 2).expect("valid"),
            seed: 0,
            originals: 100,
            duplicates: 25,
            corruption_rate: 0.1,
            inputs: Vec::new(),
            id_column: "rec_id".into(),
            text_columns: Vec::new(),
            truth: TruthSource::Generated,
            truth_file: None,
            gram: 2,
            scope: JoinScope::CrossOwner,
            k: 2,
            l: None,
            filters: true,
            key_f: None,
            key_g: None,
            parties: 2,
            threshold: None,
            backend: "simulated".into(),
            in_flight: 1,
            multiplicative_depth: None,
            plaintext_modulus: None,
            sigma: None,
            security_bits: None,
            transcript: None,
            audit: false,
            deterministic: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.t.is_zero() {
            return fail("t must be positive".into());
        }
        if self.gram == 0 {
            return fail("gram must be at least 1".into());
        }
        if self.inputs.is_empty() {
            if self.duplicates == 0 || self.duplicates > self.originals {
                return fail(format!(
                    "need 0 < duplicates <= originals, got {} and {}",
                    self.duplicates, self.originals
                ));
            }
            if !(0.0..=1.0).contains(&self.corruption_rate) {
                return fail(format!("corruption_rate {} is not in [0, 1]", self.corruption_rate));
            }
            if self.parties < 2 || self.parties - 1 > self.originals {
                return fail(format!("cannot spread {} originals over {} parties", self.originals, self.parties));
            }
        } else {
            if self.inputs.len() < 2 && matches!(self.engine, Engine::Heppjoin | Engine::Hejaccard) {
                return fail("the HE engines need at least two input files".into());
            }
            if let Some(p) = self.inputs.iter().find(|p| !p.exists()) {
                return fail(format!("input {} does not exist", p.display()));
            }
            if self.truth == TruthSource::Generated && self.truth_file.is_none() {
                return fail("generated truth needs a synthetic corpus; use truth = \"jaccard\"".into());
            }
        }
        if let Some(p) = &self.truth_file {
            if !p.exists() {
                return fail(format!("truth file {} does not exist", p.display()));
            }
        }
        if self.k == 0 || self.l == Some(0) {
            return fail("k and l must be positive".into());
        }
        let he = matches!(self.engine, Engine::Heppjoin | Engine::Hejaccard);
        if he && self.scope != JoinScope::CrossOwner {
            return fail("the HE engines only join across owners".into());
        }
        if self.in_flight == 0 {
            return fail("in_flight must be at least 1".into());
        }
        if let Some(d) = self.threshold {
            let n = if self.inputs.is_empty() { self.parties } else { self.inputs.len() };
            if d == 0 || d > n {
                return fail(format!("threshold {d} is not in 1..={n}"));
            }
        }
        heproto::make_backend(&self.backend, 0)?;
        Ok(())
    }

    fn tokenizer(&self) -> Result<Tokenizer> {
        Tokenizer::new(self.gram, '_')
    }

    fn he_config(&self, transcript: TranscriptMode) -> Result<HeConfig> {
        Ok(HeConfig {
            threshold: self.threshold,
            seed: self.seed,
            in_flight: self.in_flight,
            backend: self.backend.clone(),
            transcript,
            tokenizer: self.tokenizer()?,
            lattice: LatticeParams {
                multiplicative_depth: self.multiplicative_depth,
                plaintext_modulus: self.plaintext_modulus,
                sigma: self.sigma,
                security_bits: self.security_bits,
            },
        })
    }

    fn fingerprint_params(&self, l: usize) -> Result<FingerprintParams> {
        let key = |k: &Option<String>, tag: &str| k.clone().unwrap_or_else(|| format!("{tag}-{}", self.seed));
        FingerprintParams::new(self.k, l, key(&self.key_f, "f"), key(&self.key_g, "g"))
    }
}

/// Owner datasets and reference pairs of an experiment.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub descriptor: String,
    pub datasets: Vec<Dataset>,
    pub truth: Option<PairSet>,
}

impl Corpus {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        if cfg.inputs.is_empty() {
            let synth = generate_synthetic(cfg.seed, cfg.originals, cfg.duplicates, cfg.corruption_rate)?;
            let mut split = synth.owner_split()?;
            if cfg.parties > 2 {
                let originals = split.pop().expect("two owners");
                let parts = cfg.parties - 1;
                let sizes: Vec<usize> = (0..parts)
                    .map(|i| originals.len() / parts + usize::from(i < originals.len() % parts))
                    .collect();
                for d in split_dataset(&originals, &sizes)? {
                    let owner = split.len();
                    split.push(Dataset::new(owner, d.into_records())?);
                }
            }
            Ok(Corpus {
                descriptor: format!(
                    "synthetic:seed={},originals={},duplicates={},corruption={},parties={}",
                    cfg.seed, cfg.originals, cfg.duplicates, cfg.corruption_rate, cfg.parties
                ),
                datasets: split,
                truth: Some(synth.truth),
            })
        } else {
            let cols: Vec<&str> = cfg.text_columns.iter().map(String::as_str).collect();
            let datasets = cfg
                .inputs
                .iter()
                .enumerate()
                .map(|(owner, p)| load_csv(p, &cfg.id_column, &cols, owner))
                .collect::<Result<Vec<_>>>()?;
            let names: Vec<String> = cfg.inputs.iter().map(|p| p.display().to_string()).collect();
            Ok(Corpus {
                descriptor: format!("csv:{}", names.join("+")),
                datasets,
                truth: None,
            })
        }
    }

    pub fn token_sets(&self, tokenizer: &Tokenizer) -> Result<Vec<TokenSet>> {
        let mut sets = Vec::new();
        for d in &self.datasets {
            sets.extend(tokenizer.tokenize_dataset(d)?);
        }
        Ok(sets)
    }
}

/// Flat, stable-keyed record of one run. Times are in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub engine: Engine,
    pub t: f64,
    pub seed: u64,
    pub dataset: String,
    pub records: usize,
    pub owners: usize,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub filters: Option<bool>,
    pub local_preprocess_ms: f64,
    pub global_preprocess_ms: f64,
    pub join_ms: f64,
    /// Pairs that reached the similarity computation.
    pub candidates: u64,
    /// Pairs the join loop looked at before filtering.
    pub pairs_considered: u64,
    pub is_match_doc_freq_join: u64,
    pub is_match_rank_assignment: u64,
    pub is_match_probe: u64,
    pub is_match_verify: u64,
    pub is_match_baseline: u64,
    pub is_match_total: u64,
    /// Outcome of the transcript audit, when one ran.
    pub audit_passed: Option<bool>,
    #[serde(flatten)]
    pub metrics: Metrics,
}

impl BenchReport {
    fn new(cfg: &ExperimentConfig, corpus: &Corpus) -> Self {
        BenchReport {
            engine: cfg.engine,
            t: cfg.t.as_f64(),
            seed: cfg.seed,
            dataset: corpus.descriptor.clone(),
            records: corpus.datasets.iter().map(Dataset::len).sum(),
            owners: corpus.datasets.len(),
            k: None,
            l: None,
            filters: None,
            local_preprocess_ms: 0.0,
            global_preprocess_ms: 0.0,
            join_ms: 0.0,
            candidates: 0,
            pairs_considered: 0,
            is_match_doc_freq_join: 0,
            is_match_rank_assignment: 0,
            is_match_probe: 0,
            is_match_verify: 0,
            is_match_baseline: 0,
            is_match_total: 0,
            audit_passed: None,
            metrics: Metrics::default(),
        }
    }

    fn set_queries(&mut self, q: QueryCounts) {
        self.is_match_doc_freq_join = q.doc_freq_join;
        self.is_match_rank_assignment = q.rank_assignment;
        self.is_match_probe = q.probe;
        self.is_match_verify = q.verify;
        self.is_match_baseline = q.baseline;
        self.is_match_total = q.protocol_total() + q.baseline;
    }

    fn set_times(&mut self, local: Duration, global: Duration, join: Duration) {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        self.local_preprocess_ms = ms(local);
        self.global_preprocess_ms = ms(global);
        self.join_ms = ms(join);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: BenchReport,
    pub metrics: Metrics,
    pub pairs: PairSet,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, Duration)> {
    let started = Instant::now();
    let out = f()?;
    Ok((out, started.elapsed()))
}

fn distinct_tokens(sets: &[TokenSet]) -> usize {
    sets.iter().flat_map(|s| s.tokens.iter()).collect::<HashSet<_>>().len()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let corpus = Corpus::load(cfg)?;
    run_on(cfg, &corpus)
}

/// As [`run_experiment`], on an already loaded corpus.
pub fn run_on(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let tokenizer = cfg.tokenizer()?;
    let mut report = BenchReport::new(cfg, corpus);
    let (sets, local) = timed(|| corpus.token_sets(&tokenizer))?;
    let scope = cfg.scope;

    let pairs = match cfg.engine {
        Engine::Ppjoin => {
            let (records, global) = timed(|| prepare_records(&sets, &build_ordering(&sets)?, cfg.t))?;
            let (out, join) = timed(|| ppjoin(&records, cfg.t, scope))?;
            report.set_times(local, global, join);
            report.candidates = out.counters.verified;
            report.pairs_considered = out.counters.candidates;
            out.pairs
        }
        Engine::P4join => {
            let l = match cfg.l {
                Some(l) => l,
                None => p4join::optimal_length(cfg.k, distinct_tokens(&sets))?.round() as usize,
            };
            let params = cfg.fingerprint_params(l)?;
            let (fps, global) = timed(|| {
                let mut fps = fingerprint_all(&sets, &params);
                sort_by_cardinality(&mut fps);
                Ok(fps)
            })?;
            let filters = if cfg.filters { FilterToggles::ALL } else { FilterToggles::NONE };
            let (out, join) = timed(|| p4join::p4join(&fps, cfg.t, filters, scope))?;
            report.set_times(local, global, join);
            report.k = Some(cfg.k);
            report.l = Some(l);
            report.filters = Some(cfg.filters);
            report.candidates = out.counters.tanimoto_evaluations;
            report.pairs_considered = out.counters.pairs_considered;
            out.pairs
        }
        Engine::Heppjoin => {
            let mode = if cfg.audit || cfg.transcript.is_some() {
                TranscriptMode::Full
            } else {
                TranscriptMode::CountersOnly
            };
            let proto = Protocol::setup(corpus.datasets.clone(), &cfg.he_config(mode)?)?;
            let (out, join) = timed(|| proto.join(cfg.t))?;
            if let Some(path) = &cfg.transcript {
                let file = std::io::BufWriter::new(std::fs::File::create(path)?);
                proto.transcript().write_ndjson(file)?;
            }
            if cfg.audit {
                proto.audit()?;
                report.audit_passed = Some(true);
            }
            let times = proto.times();
            report.set_times(times.local_preprocess, times.global_preprocess, join);
            report.set_queries(proto.transcript().queries());
            report.candidates = out.counters.verified;
            report.pairs_considered = out.counters.candidates;
            out.pairs
        }
        Engine::Hejaccard => {
            let run = heproto::run_baseline(
                corpus.datasets.clone(),
                &cfg.he_config(TranscriptMode::CountersOnly)?,
                cfg.t,
            )?;
            report.set_times(run.local_preprocess, Duration::ZERO, run.join);
            report.set_queries(run.queries);
            let cross = cross_pairs(&sets);
            report.candidates = cross;
            report.pairs_considered = cross;
            run.pairs
        }
    };

    let truth = match (&cfg.truth_file, cfg.truth, &corpus.truth) {
        (Some(path), _, _) => read_pairs_file(path)?,
        (None, TruthSource::Generated, Some(truth)) => truth.clone(),
        (None, TruthSource::Generated, None) => {
            return Err(Error::Config("this corpus has no generated truth".into()));
        }
        (None, TruthSource::Jaccard, _) => full_compare_scoped(&sets, cfg.t, scope),
    };
    let metrics = score(&pairs, &truth);
    report.metrics = metrics;
    if cfg.deterministic {
        report.set_times(Duration::ZERO, Duration::ZERO, Duration::ZERO);
    }
    Ok(ExperimentOutcome { report, metrics, pairs })
}

fn cross_pairs(sets: &[TokenSet]) -> u64 {
    let mut per_owner = std::collections::BTreeMap::<usize, u64>::new();
    for s in sets {
        *per_owner.entry(s.owner_id).or_default() += 1;
    }
    let n = sets.len() as u64;
    let same: u64 = per_owner.values().map(|c| c * c.saturating_sub(1) / 2).sum();
    n * n.saturating_sub(1) / 2 - same
}

/// Runs every config, concurrently when `parallel` is set. Results keep the
/// input order.
pub fn run_all(configs: &[ExperimentConfig], parallel: bool) -> Vec<Result<ExperimentOutcome>> {
    if parallel {
        configs.par_iter().map(run_experiment).collect()
    } else {
        configs.iter().map(run_experiment).collect()
    }
}

/// One row per report, aligned on a shared corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub engine: Engine,
    pub t: f64,
    pub filters: Option<bool>,
    pub f_score: f64,
    pub candidates: u64,
    pub pairs_considered: u64,
    pub is_match_total: u64,
    pub local_preprocess_ms: f64,
    pub global_preprocess_ms: f64,
    pub join_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset: String,
    pub rows: Vec<ComparisonRow>,
    /// Filtered P4Join looked at fewer pairs than unfiltered P4Join at the
    /// same `t`; `None` without both runs.
    pub p4join_filters_reduce_comparisons: Option<bool>,
    /// HE-PPJoin spent fewer equality tests than the full-comparison baseline
    /// at the same `t`; `None` without both runs.
    pub he_ppjoin_saves_queries: Option<bool>,
}

pub fn compare_engines(reports: &[BenchReport]) -> Result<Comparison> {
    let Some(first) = reports.first() else {
        return Err(Error::Config("nothing to compare".into()));
    };
    if reports.len() < 2 {
        return Err(Error::Config("comparing needs at least two reports".into()));
    }
    if let Some(r) = reports.iter().find(|r| r.dataset != first.dataset) {
        return Err(Error::Config(format!(
            "reports cover different corpora: {} and {}",
            first.dataset, r.dataset
        )));
    }
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            engine: r.engine,
            t: r.t,
            filters: r.filters,
            f_score: r.metrics.f_score,
            candidates: r.candidates,
            pairs_considered: r.pairs_considered,
            is_match_total: r.is_match_total,
            local_preprocess_ms: r.local_preprocess_ms,
            global_preprocess_ms: r.global_preprocess_ms,
            join_ms: r.join_ms,
        })
        .collect();

    let mut p4 = None;
    let mut he = None;
    for a in reports {
        for b in reports {
            if a.t != b.t {
                continue;
            }
            if a.engine == Engine::P4join
                && b.engine == Engine::P4join
                && a.filters == Some(true)
                && b.filters == Some(false)
                && a.l == b.l
            {
                let fewer = a.candidates < b.candidates;
                p4 = Some(p4.unwrap_or(true) && fewer);
            }
            if a.engine == Engine::Heppjoin && b.engine == Engine::Hejaccard {
                let fewer = a.is_match_total < b.is_match_total;
                he = Some(he.unwrap_or(true) && fewer);
            }
        }
    }
    Ok(Comparison {
        dataset: first.dataset.clone(),
        rows,
        p4join_filters_reduce_comparisons: p4,
        he_ppjoin_saves_queries: he,
    })
}

/// Pairs found at each threshold in `ts`, all else fixed.
pub fn threshold_sweep(cfg: &ExperimentConfig, ts: &[Threshold]) -> Result<Vec<(Threshold, usize)>> {
    cfg.validate()?;
    let corpus = Corpus::load(cfg)?;
    ts.iter()
        .map(|&t| {
            let run = run_on(&ExperimentConfig { t, ..cfg.clone() }, &corpus)?;
            Ok((t, run.pairs.len()))
        })
        .collect()
}

/// Canonical pair set from raw id tuples.
pub fn pair_set(ids: impl IntoIterator<Item = (u64, u64)>) -> PairSet {
    ids.into_iter()
        .map(|(a, b)| MatchPair::certified(crate::RecordId(a), crate::RecordId(b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn th(s: &str) -> Threshold {
        s.parse().unwrap()
    }

    fn small(engine: Engine, t: &str) -> ExperimentConfig {
        ExperimentConfig {
            engine,
            t: th(t),
            seed: 4,
            originals: 30,
            duplicates: 10,
            deterministic: true,
            ..Default::default()
        }
    }

    #[test]
    fn score_edge_cases() {
        let truth = pair_set([(1, 2), (3, 4)]);
        let m = score(&truth, &truth);
        assert_eq!((m.precision, m.recall, m.f_score), (1.0, 1.0, 1.0));

        let found = pair_set([(1, 2), (3, 4), (5, 6), (7, 8)]);
        let m = score(&found, &truth);
        assert_eq!((m.precision, m.recall), (0.5, 1.0));
        assert!((m.f_score - 2.0 / 3.0).abs() < 1e-12);

        let m = score(&PairSet::new(), &truth);
        assert!(m.precision_undefined && !m.recall_undefined);
        assert_eq!(m.f_score, 0.0);
        assert!(m.correct_pairs <= m.true_pairs.min(m.found_pairs));
    }

    #[test]
    fn ppjoin_and_he_ppjoin_score_identically() {
        for t in ["0.2", "0.5", "0.8"] {
            let plain = run_experiment(&small(Engine::Ppjoin, t)).unwrap();
            let he = run_experiment(&small(Engine::Heppjoin, t)).unwrap();
            assert_eq!(plain.pairs, he.pairs);
            assert_eq!(plain.metrics, he.metrics);
            assert!(he.report.is_match_total > 0);
        }
    }

    #[test]
    fn ppjoin_against_jaccard_truth_is_perfect() {
        let cfg = ExperimentConfig {
            truth: TruthSource::Jaccard,
            ..small(Engine::Ppjoin, "0.6")
        };
        let m = run_experiment(&cfg).unwrap().metrics;
        assert!(m.recall_undefined || m.f_score == 1.0);
    }

    #[test]
    fn p4join_filters_change_counters_not_metrics() {
        let on = run_experiment(&ExperimentConfig { l: Some(256), ..small(Engine::P4join, "0.8") }).unwrap();
        let off = run_experiment(&ExperimentConfig {
            l: Some(256),
            filters: false,
            ..small(Engine::P4join, "0.8")
        })
        .unwrap();
        assert_eq!(on.pairs, off.pairs);
        assert_eq!(on.metrics, off.metrics);
        assert!(on.report.candidates < off.report.candidates);
        let cmp = compare_engines(&[on.report, off.report]).unwrap();
        assert_eq!(cmp.p4join_filters_reduce_comparisons, Some(true));
        assert_eq!(cmp.he_ppjoin_saves_queries, None);
    }

    #[test]
    fn threshold_sweep_is_monotone() {
        let ts: Vec<Threshold> = (1..=9).map(|i| Threshold::new(i, 10).unwrap()).collect();
        let counts = threshold_sweep(&small(Engine::Ppjoin, "0.5"), &ts).unwrap();
        assert!(counts.windows(2).all(|w| w[0].1 >= w[1].1), "{counts:?}");
    }

    #[test]
    fn he_ppjoin_beats_full_comparison() {
        let cfg = |e| ExperimentConfig {
            originals: 60,
            duplicates: 20,
            ..small(e, "0.8")
        };
        let he = run_experiment(&cfg(Engine::Heppjoin)).unwrap();
        let base = run_experiment(&cfg(Engine::Hejaccard)).unwrap();
        assert_eq!(he.pairs, base.pairs);
        let cmp = compare_engines(&[he.report, base.report]).unwrap();
        assert_eq!(cmp.he_ppjoin_saves_queries, Some(true));
    }

    #[test]
    fn compare_rejects_bad_input() {
        let a = run_experiment(&small(Engine::Ppjoin, "0.5")).unwrap().report;
        assert!(matches!(compare_engines(std::slice::from_ref(&a)), Err(Error::Config(_))));
        let mut b = a.clone();
        b.dataset = "elsewhere".into();
        assert!(matches!(compare_engines(&[a, b]), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_reports_repeat_exactly() {
        let cfg = small(Engine::P4join, "0.5");
        let a = run_experiment(&cfg).unwrap().report.to_json().unwrap();
        let b = run_experiment(&cfg).unwrap().report.to_json().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"is_match_total\": 0"));
    }

    #[test]
    fn config_errors_come_first() {
        let bad = [
            "t = 0.0",
            "engine = \"nope\"",
            "duplicates = 0",
            "in_flight = 0",
            "backend = \"palisade\"",
            "parties = 3\nthreshold = 4",
            "inputs = [\"/no/such/file.csv\"]\ntruth = \"jaccard\"",
            "unknown_key = 1",
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
        let cfg = ExperimentConfig::from_toml("engine = \"heppjoin\"\nt = 0.8\nparties = 3\nthreshold = 2").unwrap();
        assert_eq!(cfg.engine, Engine::Heppjoin);
        assert_eq!(cfg.t, th("0.8"));
    }

    #[test]
    fn three_party_corpus_keeps_truth_cross_owner() {
        let cfg = ExperimentConfig {
            parties: 3,
            ..small(Engine::Heppjoin, "0.5")
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.report.owners, 3);
        let plain = run_experiment(&ExperimentConfig { engine: Engine::Ppjoin, ..cfg }).unwrap();
        assert_eq!(out.pairs, plain.pairs);
    }
}
