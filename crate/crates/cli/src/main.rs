use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hejoin::attacks::{bit_sensitivity, default_universe, lint_parameters, Enumerator, RainbowTable};
use hejoin::dataset::{generate_synthetic, split_dataset, write_csv, Dataset};
use hejoin::eval::{compare_engines, run_all, run_experiment, BenchReport, Engine, ExperimentConfig, TruthSource};
use hejoin::p4join::{fingerprint_all, read_fingerprints_file, write_fingerprints, FingerprintHeader, FingerprintParams};
use hejoin::pairs::{write_pairs, write_pairs_file};
use hejoin::ppjoin::JoinScope;
use hejoin::{Threshold, Tokenizer};

#[derive(Parser)]
#[command(name = "hejoin", version, about = "Exact and privacy-preserving set-similarity joins")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Similarity threshold, as a decimal or a fraction such as 7/11.
    #[arg(long)]
    t: Option<Threshold>,
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment config (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct JoinArgs {
    #[command(flatten)]
    common: Common,
    /// CSV inputs, one per owner. Without inputs a synthetic corpus is used.
    inputs: Vec<PathBuf>,
    #[arg(long)]
    id_column: Option<String>,
    /// Text columns to concatenate; every non-id column when absent.
    #[arg(long, value_delimiter = ',')]
    text_columns: Vec<String>,
    /// Reference pairs CSV to score against.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also match records of the same owner.
    #[arg(long)]
    all_pairs: bool,
    /// Write the report as JSON to this file; stderr when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus split across owners.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        originals: usize,
        #[arg(long, default_value_t = 25)]
        duplicates: usize,
        #[arg(long, default_value_t = 0.1)]
        corruption: f64,
        #[arg(long, default_value_t = 2)]
        parties: usize,
    },
    /// Exact PPJoin.
    Ppjoin(JoinArgs),
    /// Fingerprint join by Tanimoto similarity.
    P4join {
        #[command(flatten)]
        join: JoinArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        no_filters: bool,
        #[arg(long)]
        key_f: Option<String>,
        #[arg(long)]
        key_g: Option<String>,
        /// Also write the fingerprints to this file.
        #[arg(long)]
        fingerprints: Option<PathBuf>,
    },
    /// PPJoin by a host over threshold-encrypted tokens.
    Heppjoin {
        #[command(flatten)]
        join: JoinArgs,
        /// Shares needed to decrypt; defaults to every party.
        #[arg(long)]
        threshold: Option<usize>,
        #[arg(long)]
        in_flight: Option<usize>,
        #[arg(long)]
        backend: Option<String>,
        /// Write the host transcript as NDJSON.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Fail unless the transcript passes the leakage audit.
        #[arg(long)]
        audit: bool,
        /// Run the full-comparison baseline instead.
        #[arg(long)]
        baseline: bool,
    },
    /// Attacks on fingerprint files.
    Attack {
        #[command(subcommand)]
        attack: Attack,
    },
    /// Run one or more experiment configs and write their reports as JSON lines.
    Bench {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run configs concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Compare reports produced by `bench`.
    Compare {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct AttackKeys {
    fingerprints: PathBuf,
    #[arg(long)]
    key_f: Option<String>,
    #[arg(long)]
    key_g: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl AttackKeys {
    /// Parameters from the file header plus the keys given on the command
    /// line, checked against the header's key digest.
    fn load(&self) -> Result<(FingerprintParams, Vec<hejoin::p4join::Fingerprint>, FingerprintHeader)> {
        let (header, fps) = read_fingerprints_file(&self.fingerprints)
            .with_context(|| format!("reading {}", self.fingerprints.display()))?;
        let key = |k: &Option<String>, tag: &str| k.clone().unwrap_or_else(|| format!("{tag}-{}", self.seed));
        let params = FingerprintParams::new(header.k, header.l, key(&self.key_f, "f"), key(&self.key_g, "g"))?;
        header.check(&params)?;
        Ok((params, fps, header))
    }
}

#[derive(Subcommand)]
enum Attack {
    /// Rank bits by how much their inversion reveals.
    Sensitivity(AttackKeys),
    /// Recover token sets by enumerating every bi-gram.
    Enumerate {
        #[command(flatten)]
        keys: AttackKeys,
        #[arg(long, default_value_t = 1444)]
        budget: usize,
    },
    /// Look fingerprints up in a table built from a dictionary of cleartexts.
    Rainbow {
        #[command(flatten)]
        keys: AttackKeys,
        /// One cleartext per line.
        #[arg(long)]
        dictionary: PathBuf,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn experiment(engine: Engine, join: &JoinArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &join.common.config {
        Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.engine = engine;
    if let Some(t) = join.common.t {
        cfg.t = t;
    }
    if let Some(seed) = join.common.seed {
        cfg.seed = seed;
    }
    if !join.inputs.is_empty() {
        cfg.inputs = join.inputs.clone();
        if cfg.truth == TruthSource::Generated {
            cfg.truth = TruthSource::Jaccard;
        }
    }
    if let Some(c) = &join.id_column {
        cfg.id_column = c.clone();
    }
    if !join.text_columns.is_empty() {
        cfg.text_columns = join.text_columns.clone();
    }
    if join.truth.is_some() {
        cfg.truth_file = join.truth.clone();
    }
    if join.all_pairs {
        cfg.scope = JoinScope::AllPairs;
    }
    Ok(cfg)
}

fn finish(cfg: &ExperimentConfig, join: &JoinArgs) -> Result<()> {
    cfg.validate()?;
    let outcome = run_experiment(cfg)?;
    write_pairs(&outcome.pairs, output(&join.common.out)?)?;
    let json = outcome.report.to_json()?;
    match &join.report {
        Some(p) => std::fs::write(p, json + "\n")?,
        None => eprintln!("{json}"),
    }
    Ok(())
}

fn gen(common: &Common, originals: usize, duplicates: usize, corruption: f64, parties: usize) -> Result<()> {
    let Some(dir) = &common.out else {
        bail!("gen needs --out DIR");
    };
    if parties < 2 {
        bail!("need at least two parties");
    }
    std::fs::create_dir_all(dir)?;
    let corpus = generate_synthetic(common.seed.unwrap_or(0), originals, duplicates, corruption)?;
    let mut owners = corpus.owner_split()?;
    if parties > 2 {
        let rest = owners.pop().expect("two owners");
        let parts = parties - 1;
        let sizes: Vec<usize> = (0..parts)
            .map(|i| rest.len() / parts + usize::from(i < rest.len() % parts))
            .collect();
        for d in split_dataset(&rest, &sizes)? {
            let owner = owners.len();
            owners.push(Dataset::new(owner, d.into_records())?);
        }
    }
    for d in &owners {
        write_csv(d, File::create(dir.join(format!("owner_{}.csv", d.owner_id())))?)?;
    }
    write_pairs_file(&corpus.truth, dir.join("truth.csv"))?;
    eprintln!("wrote {} owners and {} truth pairs to {}", owners.len(), corpus.truth.len(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct RecoveryRow {
    record_id: u64,
    candidates: usize,
    exact_recovery: bool,
    truncated: bool,
    tokens: String,
}

#[derive(Serialize)]
struct RainbowRow {
    record_id: u64,
    matches: usize,
    cleartexts: String,
}

fn attack(attack: &Attack) -> Result<()> {
    match attack {
        Attack::Sensitivity(keys) => {
            let (params, fps, header) = keys.load()?;
            let report = bit_sensitivity(&fps, &header, &default_universe(), &params)?;
            report.write_csv(output(&keys.out)?)?;
        }
        Attack::Enumerate { keys, budget } => {
            let (params, fps, _) = keys.load()?;
            let enumerator = Enumerator::new(&default_universe(), &params)?;
            let mut w = csv::Writer::from_writer(output(&keys.out)?);
            let mut exact = 0;
            for fp in &fps {
                let r = enumerator.recover(fp, *budget)?;
                exact += usize::from(r.exact_recovery);
                w.serialize(RecoveryRow {
                    record_id: r.record_id.0,
                    candidates: r.candidates.len(),
                    exact_recovery: r.exact_recovery,
                    truncated: r.truncated,
                    tokens: r.candidates.join("|"),
                })?;
            }
            w.flush()?;
            eprintln!("exact recovery on {exact} of {} records", fps.len());
        }
        Attack::Rainbow { keys, dictionary } => {
            let (params, fps, _) = keys.load()?;
            let words: Vec<String> = BufReader::new(File::open(dictionary)?)
                .lines()
                .collect::<io::Result<Vec<_>>>()?
                .into_iter()
                .filter(|l| !l.trim().is_empty())
                .collect();
            let table = RainbowTable::build(&words, &Tokenizer::default(), &params)?;
            let mut w = csv::Writer::from_writer(output(&keys.out)?);
            for fp in &fps {
                let hits = table.lookup(fp);
                w.serialize(RainbowRow {
                    record_id: fp.record_id.0,
                    matches: hits.len(),
                    cleartexts: hits.join("|"),
                })?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn read_reports(paths: &[PathBuf]) -> Result<Vec<BenchReport>> {
    let mut out = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            out.push(serde_json::from_str(line).with_context(|| format!("parsing {}", p.display()))?);
        }
    }
    Ok(out)
}

fn write_fps(path: &Path, cfg: &ExperimentConfig, l: usize) -> Result<()> {
    let corpus = hejoin::eval::Corpus::load(cfg)?;
    let sets = corpus.token_sets(&Tokenizer::new(cfg.gram, '_')?)?;
    let key = |k: &Option<String>, tag: &str| k.clone().unwrap_or_else(|| format!("{tag}-{}", cfg.seed));
    let params = FingerprintParams::new(cfg.k, l, key(&cfg.key_f, "f"), key(&cfg.key_g, "g"))?;
    let u = sets.iter().flat_map(|s| s.tokens.iter()).collect::<HashSet<_>>().len();
    for w in lint_parameters(u, cfg.k, l)? {
        eprintln!("warning: {}", serde_json::to_string(&w)?);
    }
    write_fingerprints(&FingerprintHeader::of(&params), &fingerprint_all(&sets, &params), File::create(path)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            common,
            originals,
            duplicates,
            corruption,
            parties,
        } => gen(&common, originals, duplicates, corruption, parties),
        Command::Ppjoin(join) => finish(&experiment(Engine::Ppjoin, &join)?, &join),
        Command::P4join {
            join,
            k,
            l,
            no_filters,
            key_f,
            key_g,
            fingerprints,
        } => {
            let mut cfg = experiment(Engine::P4join, &join)?;
            cfg.k = k.unwrap_or(cfg.k);
            cfg.l = l.or(cfg.l);
            cfg.filters &= !no_filters;
            cfg.key_f = key_f.or(cfg.key_f);
            cfg.key_g = key_g.or(cfg.key_g);
            cfg.validate()?;
            let outcome = run_experiment(&cfg)?;
            if let Some(path) = &fingerprints {
                write_fps(path, &cfg, outcome.report.l.expect("p4join reports l"))?;
            }
            write_pairs(&outcome.pairs, output(&join.common.out)?)?;
            let json = outcome.report.to_json()?;
            match &join.report {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => eprintln!("{json}"),
            }
            Ok(())
        }
        Command::Heppjoin {
            join,
            threshold,
            in_flight,
            backend,
            transcript,
            audit,
            baseline,
        } => {
            let engine = if baseline { Engine::Hejaccard } else { Engine::Heppjoin };
            let mut cfg = experiment(engine, &join)?;
            cfg.threshold = threshold.or(cfg.threshold);
            cfg.in_flight = in_flight.unwrap_or(cfg.in_flight);
            if let Some(b) = backend {
                cfg.backend = b;
            }
            cfg.transcript = transcript.or(cfg.transcript);
            cfg.audit |= audit;
            finish(&cfg, &join)
        }
        Command::Attack { attack: a } => attack(&a),
        Command::Bench { configs, out, parallel } => {
            let cfgs = configs
                .iter()
                .map(|p| ExperimentConfig::from_file(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let mut w = output(&out)?;
            for (path, result) in configs.iter().zip(run_all(&cfgs, parallel)) {
                let outcome = result.with_context(|| format!("running {}", path.display()))?;
                writeln!(w, "{}", serde_json::to_string(&outcome.report)?)?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Compare { reports, out } => {
            let cmp = compare_engines(&read_reports(&reports)?)?;
            let mut w = output(&out)?;
            writeln!(w, "{}", serde_json::to_string_pretty(&cmp)?)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
