//! The subcommands, as library functions writing report files.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use cohortsift::corpus::{
    build_corpus, fit_zipf_mandelbrot, rank_distribution, read_jsonl, word_occurrence_table,
    write_jsonl, write_occurrence_tsv, write_rank_tsv, Corpus,
};
use cohortsift::ensemble::{vote_bin, Model, VoteHistogram};
use cohortsift::evaluation::{
    cross_validate, metrics_from_confusion, prepare_folds, sweep, sweep_seeds, train_model,
    voting_sweep, write_histogram_tsv, write_sweep_tsv, ConfusionMatrix, CvResult, Metrics,
    SweepPoint, SweepResult, HISTOGRAM_BIN_WIDTH,
};
use cohortsift::evolearner::{extract_keywords, keyword_shares, KeywordShare, ProgramTree};
use cohortsift::features::{column_scores, rank_features, FeatureId, FeatureMatrix};
use cohortsift::phrases::{rank_pairs_by_mi, PairStats};
use cohortsift::pipeline::{prepare_fold, Dataset, PipelineConfig};
use cohortsift::synthgen::{generate, write_ground_truth_tsv, SynthSpec};

use crate::config::{ExperimentConfig, PartialConfig, SignificantSource, SweepFile};

/// Count cutoffs reported in the word-occurrence table.
pub const OCCURRENCE_THRESHOLDS: [u64; 8] = [1, 2, 5, 10, 20, 50, 100, 1000];

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = create(path)?;
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_corpus(input: &Path) -> Result<Corpus> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let records =
        read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", input.display()))?;
    Ok(build_corpus(records)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Background text only.
    PaperScale,
    /// Six planted terms at 0.6 vs 0.05 per note.
    Strong,
    /// Six planted terms at equal rates.
    Null,
    /// Six weakly discriminative planted terms.
    Weak,
}

impl Preset {
    pub fn spec(self, seed: u64) -> SynthSpec {
        match self {
            Preset::PaperScale => SynthSpec::paper_scale(seed),
            Preset::Strong => SynthSpec::strong_signal(seed),
            Preset::Null => SynthSpec::null_signal(seed),
            Preset::Weak => SynthSpec::weak_signal(seed),
        }
    }
}

/// Writes `corpus.jsonl`, `ground_truth.tsv` and `spec.json`.
pub fn cmd_generate(spec: &SynthSpec, out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let synth = generate(spec)?;
    let corpus = out.join("corpus.jsonl");
    write_file(&corpus, |w| Ok(write_jsonl(w, &synth.records)?))?;
    write_file(&out.join("ground_truth.tsv"), |w| {
        Ok(write_ground_truth_tsv(w, spec)?)
    })?;
    write_file(&out.join("spec.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, spec)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(corpus)
}

/// Writes `rank.tsv`, `occurrence.tsv`, `zipf.tsv` and `pairs.tsv`.
pub fn cmd_stats(input: &Path, out: &Path, min_pair_count: u64) -> Result<()> {
    let corpus = load_corpus(input)?;
    fs::create_dir_all(out)?;
    let ranks = rank_distribution(&corpus)?;
    write_file(&out.join("rank.tsv"), |w| Ok(write_rank_tsv(w, &ranks)?))?;
    let occ = word_occurrence_table(&corpus, &OCCURRENCE_THRESHOLDS);
    write_file(&out.join("occurrence.tsv"), |w| {
        Ok(write_occurrence_tsv(w, &occ)?)
    })?;
    write_file(&out.join("zipf.tsv"), |w| {
        writeln!(w, "parameter\tvalue")?;
        match fit_zipf_mandelbrot(&ranks) {
            Ok(fit) => {
                writeln!(w, "amplitude\t{:.6e}", fit.amplitude)?;
                writeln!(w, "shift\t{:.6}", fit.shift)?;
                writeln!(w, "exponent\t{:.6}", fit.exponent)?;
                writeln!(w, "residual\t{:.6e}", fit.residual)?;
            }
            Err(e) => eprintln!("warning: no Zipf fit: {e}"),
        }
        Ok(())
    })?;
    let stats =
        PairStats::from_notes((0..corpus.len()).flat_map(|i| corpus.record_notes(i).iter()));
    write_file(&out.join("pairs.tsv"), |w| {
        writeln!(w, "pair\tcount\tmi")?;
        for (pair, mi) in rank_pairs_by_mi(&stats) {
            let count = stats.count(&pair);
            if count >= min_pair_count as f64 {
                writeln!(w, "{pair}\t{count}\t{mi:.6}")?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let corpus = load_corpus(&config.input)?;
    Ok(Dataset::new(
        &corpus,
        config.pos_group,
        config.neg_group,
        config.arity,
    )?)
}

fn confusion_fields(cm: &ConfusionMatrix) -> String {
    format!(
        "{}\t{}\t{}\t{}",
        cm.true_pos, cm.false_pos, cm.false_neg, cm.true_neg
    )
}

fn metrics_or_default(cm: &ConfusionMatrix) -> Metrics {
    metrics_from_confusion(cm).unwrap_or_default()
}

/// Summary of a cross-validation run.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub result: CvResult,
    /// Per-seed pooled accuracies when more than one seed was requested.
    pub seeds: Option<SweepResult>,
    pub significant_words: Option<BTreeSet<String>>,
}

/// Cross-validates and writes the fold artifacts, pooled metrics, keyword
/// shares and the run manifest.
pub fn cmd_cv(config: &ExperimentConfig, out: &Path) -> Result<CvReport> {
    if config.model_size.is_multiple_of(2) {
        eprintln!(
            "warning: model size {} is even; tied votes go to the negative group {}",
            config.model_size, config.neg_group
        );
    }
    let ds = load_dataset(config)?;
    let pipeline = config.pipeline_config()?;
    let train = config.train_config();
    let folds = prepare_folds(&ds, &pipeline, train.static_features, config.k)?;
    let result = cross_validate(&folds, &train, config.model_size, ds.negative_label())?;

    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.toml"), config.manifest("cv")?)?;
    let mut votes = VoteHistogram {
        positive: vec![0; 10],
        negative: vec![0; 10],
    };
    write_file(&out.join("folds.tsv"), |w| {
        writeln!(
            w,
            "fold\ttrain_rows\ttest_rows\ttp\tfp\tfn\ttn\t{}",
            Metrics::TSV_HEADER
        )?;
        for (i, (fold, res)) in folds.iter().zip(&result.folds).enumerate() {
            writeln!(
                w,
                "{i}\t{}\t{}\t{}\t{}",
                fold.train.n_rows(),
                fold.test.n_rows(),
                confusion_fields(&res.test),
                metrics_or_default(&res.test).tsv_fields()
            )?;
        }
        Ok(())
    })?;
    for (i, (fold, res)) in folds.iter().zip(&result.folds).enumerate() {
        let dir = out.join(format!("fold{i}"));
        fs::create_dir_all(&dir)?;
        write_file(&dir.join("confusion.tsv"), |w| Ok(res.test.write_tsv(w)?))?;
        write_file(&dir.join("thresholds.tsv"), |w| {
            Ok(fold.thresholds.write_tsv(w)?)
        })?;
        write_file(&dir.join("features.tsv"), |w| {
            write_selected_features(w, &fold.train)
        })?;
        write_file(&dir.join("train.fm"), |w| Ok(fold.train.write_to(w)?))?;
        write_file(&dir.join("model.txt"), |w| {
            Ok(res.model.write_to(w, "train.fm")?)
        })?;
        for (count, &label) in res
            .model
            .vote_counts(&fold.test)?
            .into_iter()
            .zip(fold.test.labels())
        {
            let b = vote_bin(count, res.model.len(), 10);
            if label == ds.positive_label() {
                votes.positive[b] += 1;
            } else {
                votes.negative[b] += 1;
            }
        }
    }
    write_file(&out.join("votes.tsv"), |w| Ok(votes.write_tsv(w)?))?;
    write_file(&out.join("pooled.tsv"), |w| {
        writeln!(w, "split\ttp\tfp\tfn\ttn\t{}", Metrics::TSV_HEADER)?;
        writeln!(
            w,
            "test\t{}\t{}",
            confusion_fields(&result.pooled),
            result.metrics.tsv_fields()
        )?;
        writeln!(
            w,
            "train\t{}\t{}",
            confusion_fields(&result.pooled_train),
            metrics_or_default(&result.pooled_train).tsv_fields()
        )?;
        Ok(())
    })?;
    let models: Vec<&Model> = result.folds.iter().map(|f| &f.model).collect();
    write_file(&out.join("keywords.tsv"), |w| {
        write_keywords_tsv(w, &keyword_report(&models))
    })?;

    let seeds = if config.seeds > 1 {
        let list: Vec<u64> = (0..config.seeds as u64)
            .map(|s| config.seed.wrapping_add(s))
            .collect();
        let sweep = sweep_seeds(
            "cv",
            &folds,
            &train,
            config.model_size,
            ds.negative_label(),
            &list,
        )?;
        write_seed_list(&out.join("seeds.tsv"), &list, &sweep)?;
        write_file(&out.join("hist.tsv"), |w| {
            Ok(write_histogram_tsv(
                w,
                &sweep.accuracies,
                HISTOGRAM_BIN_WIDTH,
            )?)
        })?;
        Some(sweep)
    } else {
        None
    };

    let significant_words = match config.emit_significant_words {
        SignificantSource::None => None,
        source => {
            let words = significant_words(&ds, &pipeline, config, source)?;
            write_file(&out.join("significant_words.txt"), |w| {
                writeln!(w, "# {source}")?;
                for word in &words {
                    writeln!(w, "{word}")?;
                }
                Ok(())
            })?;
            Some(words)
        }
    };
    Ok(CvReport {
        result,
        seeds,
        significant_words,
    })
}

fn write_selected_features<W: Write>(w: &mut W, matrix: &FeatureMatrix) -> Result<()> {
    let scores = column_scores(matrix);
    writeln!(w, "index\tfeature\tclass_mi\tsupport")?;
    for (j, f) in matrix.features().iter().enumerate() {
        writeln!(w, "{j}\t{f}\t{:.6}\t{}", scores[j].mi, scores[j].support)?;
    }
    Ok(())
}

fn write_seed_list(path: &Path, seeds: &[u64], sweep: &SweepResult) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "seed\taccuracy")?;
        for (s, a) in seeds.iter().zip(&sweep.accuracies) {
            writeln!(w, "{s}\t{a:.6}")?;
        }
        Ok(())
    })
}

/// Words for a later run's significant-word cut, drawn from all records of
/// the two cohorts.
fn significant_words(
    ds: &Dataset,
    pipeline: &PipelineConfig,
    config: &ExperimentConfig,
    source: SignificantSource,
) -> Result<BTreeSet<String>> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let words_only = PipelineConfig {
        arity: 1,
        ..pipeline.clone()
    };
    match source {
        SignificantSource::None => Ok(BTreeSet::new()),
        SignificantSource::FeatureSelection(n) => {
            let fold = prepare_fold(ds, &all, &[], &words_only, usize::MAX)?;
            let mut words = BTreeSet::new();
            for j in rank_features(&fold.train) {
                if words.len() == n {
                    break;
                }
                words.insert(fold.train.features()[j].term.words()[0].clone());
            }
            Ok(words)
        }
        SignificantSource::Ensemble(m) => {
            let fold = prepare_fold(ds, &all, &[], pipeline, config.static_features)?;
            let mut words = BTreeSet::new();
            for j in 0..m as u64 {
                let train = cohortsift::evolearner::TrainConfig {
                    seed: config.seed.wrapping_add(j),
                    ..config.train_config()
                };
                let model =
                    train_model(&fold.train, &train, config.model_size, ds.negative_label())?;
                let trees: Vec<&ProgramTree> = model.reps().iter().map(|r| &r.tree).collect();
                let k = extract_keywords(trees, model.features());
                for term in k.positive.iter().chain(&k.negative) {
                    words.extend(term.split('_').map(str::to_owned));
                }
            }
            Ok(words)
        }
    }
}

/// Keyword lists with the share of representations using each term.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordReport {
    pub positive: Vec<(String, f64)>,
    pub negative: Vec<(String, f64)>,
    pub representations: usize,
}

pub fn keyword_report(models: &[&Model]) -> KeywordReport {
    // Pool every representation, re-keying literals by feature name so
    // models over different tables line up.
    let mut table: Vec<FeatureId> = Vec::new();
    let mut trees = Vec::new();
    for model in models {
        for rep in model.reps() {
            let text = cohortsift::evolearner::print_tree(&rep.tree, model.features());
            trees.push(
                cohortsift::evolearner::parse_tree_interning(&text, &mut table)
                    .expect("printed trees parse"),
            );
        }
    }
    let shares = keyword_shares(&trees, &table);
    let k = extract_keywords(&trees, &table);
    let share = |t: &String, f: fn(&KeywordShare) -> f64| (t.clone(), f(&shares[t]));
    KeywordReport {
        positive: k
            .positive
            .iter()
            .map(|t| share(t, |s| s.positive))
            .collect(),
        negative: k
            .negative
            .iter()
            .map(|t| share(t, |s| s.negative))
            .collect(),
        representations: trees.len(),
    }
}

pub fn write_keywords_tsv<W: Write>(w: &mut W, report: &KeywordReport) -> Result<()> {
    writeln!(w, "polarity\tterm\tshare")?;
    for (t, s) in &report.positive {
        writeln!(w, "positive\t{t}\t{s:.6}")?;
    }
    for (t, s) in &report.negative {
        writeln!(w, "negative\t{t}\t{s:.6}")?;
    }
    Ok(())
}

/// Reads model files and pools their keywords.
pub fn cmd_keywords(paths: &[PathBuf]) -> Result<KeywordReport> {
    if paths.is_empty() {
        bail!("no model files given");
    }
    let mut models = Vec::new();
    for p in paths {
        let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let m = Model::read_from(BufReader::new(file), None)
            .with_context(|| format!("reading {}", p.display()))?;
        models.push(m.model);
    }
    let refs: Vec<&Model> = models.iter().collect();
    Ok(keyword_report(&refs))
}

/// Results of a sweep run.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub grid: Vec<SweepResult>,
    pub voting: Vec<SweepResult>,
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs every grid row and the optional voting sweep. Settings in the sweep
/// file win over `flags`; grid rows win over both.
pub fn cmd_sweep(file: &SweepFile, flags: &PartialConfig, out: &Path) -> Result<SweepReport> {
    if file.grid.is_empty() && file.voting_sizes.is_empty() {
        bail!("sweep file has an empty grid and no voting sizes");
    }
    let base = file.base.or(flags);
    let base_config = ExperimentConfig::resolve(&base)?;
    let ds = load_dataset(&base_config)?;
    let seeds: Vec<u64> = (0..base_config.seeds as u64)
        .map(|s| base_config.seed.wrapping_add(s))
        .collect();

    let mut labels = BTreeSet::new();
    let mut points = Vec::new();
    for row in &file.grid {
        if !labels.insert(file_safe(&row.label)) {
            bail!("duplicate grid label `{}`", row.label);
        }
        let c = ExperimentConfig::resolve(&row.settings.or(&base))?;
        if c.input != base_config.input
            || c.pos_group != base_config.pos_group
            || c.neg_group != base_config.neg_group
        {
            bail!("grid row `{}` changes the input or cohorts", row.label);
        }
        if c.arity > base_config.arity {
            bail!(
                "grid row `{}` uses a larger arity than the base settings",
                row.label
            );
        }
        points.push(SweepPoint {
            label: row.label.clone(),
            pipeline: c.pipeline_config()?,
            train: c.train_config(),
            k: c.k,
            model_size: c.model_size,
        });
    }

    fs::create_dir_all(out)?;
    // The sweep file with every base setting resolved; runs again as --grid.
    let manifest = SweepFile {
        base: base_config.to_partial("sweep"),
        ..file.clone()
    };
    fs::write(out.join("manifest.toml"), toml::to_string(&manifest)?)?;

    let grid = if points.is_empty() {
        Vec::new()
    } else {
        sweep(&ds, &points, &seeds)?
    };
    for r in &grid {
        let name = file_safe(&r.label);
        write_seed_list(&out.join(format!("seeds_{name}.tsv")), &seeds, r)?;
        write_file(&out.join(format!("hist_{name}.tsv")), |w| {
            Ok(write_histogram_tsv(w, &r.accuracies, HISTOGRAM_BIN_WIDTH)?)
        })?;
    }
    if !grid.is_empty() {
        write_file(&out.join("sweep.tsv"), |w| Ok(write_sweep_tsv(w, &grid)?))?;
    }

    let voting = if file.voting_sizes.is_empty() {
        Vec::new()
    } else {
        let folds = prepare_folds(
            &ds,
            &base_config.pipeline_config()?,
            base_config.static_features,
            base_config.k,
        )?;
        let n_models = file.voting_models.unwrap_or(base_config.seeds);
        let v = voting_sweep(
            &folds,
            &base_config.train_config(),
            &file.voting_sizes,
            n_models,
            base_config.seed,
            ds.negative_label(),
        )?;
        write_file(&out.join("voting.tsv"), |w| Ok(write_sweep_tsv(w, &v)?))?;
        v
    };
    Ok(SweepReport { grid, voting })
}
