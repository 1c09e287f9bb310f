//! Experiment settings from flags and TOML files, and run manifests.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cohortsift::evolearner::TrainConfig;
use cohortsift::phrases::CutSpec;
use cohortsift::pipeline::PipelineConfig;

/// Where a run takes its "significant words" list from, if it emits one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SignificantSource {
    #[default]
    None,
    /// The top `n` words by class mutual information.
    FeatureSelection(usize),
    /// Keywords of an ensemble of `m` models.
    Ensemble(usize),
}

impl fmt::Display for SignificantSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignificantSource::None => write!(f, "none"),
            SignificantSource::FeatureSelection(n) => write!(f, "from-feature-selection:{n}"),
            SignificantSource::Ensemble(m) => write!(f, "from-ensemble:{m}"),
        }
    }
}

impl FromStr for SignificantSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "none" {
            return Ok(SignificantSource::None);
        }
        let (kind, n) = s.split_once(':').ok_or_else(|| {
            format!("expected none, from-feature-selection:N or from-ensemble:M, got `{s}`")
        })?;
        let n: usize = n.parse().map_err(|_| format!("bad count in `{s}`"))?;
        if n == 0 {
            return Err(format!("count must be positive in `{s}`"));
        }
        match kind {
            "from-feature-selection" => Ok(SignificantSource::FeatureSelection(n)),
            "from-ensemble" => Ok(SignificantSource::Ensemble(n)),
            _ => Err(format!("unknown significant-words source `{kind}`")),
        }
    }
}

impl Serialize for SignificantSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SignificantSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Settings that may come from flags or a file; unset fields fall back to
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub input: Option<PathBuf>,
    pub pos_group: Option<i64>,
    pub neg_group: Option<i64>,
    pub arity: Option<usize>,
    pub min_word_count: Option<u64>,
    pub min_ngram_count: Option<u64>,
    pub min_mi: Option<f64>,
    pub significant_words: Option<PathBuf>,
    pub thresholds: Option<usize>,
    pub static_features: Option<usize>,
    pub dynamic_features: Option<usize>,
    pub eval_budget: Option<u64>,
    pub restart_stagnation: Option<usize>,
    pub k: Option<usize>,
    pub seeds: Option<usize>,
    pub model_size: Option<usize>,
    pub emit_significant_words: Option<SignificantSource>,
    pub seed: Option<u64>,
    /// Manifest bookkeeping; accepted so a manifest can be fed back in.
    pub command: Option<String>,
    pub version: Option<String>,
}

macro_rules! prefer {
    ($a:ident, $b:ident, $($f:ident),*) => {
        PartialConfig { $($f: $a.$f.clone().or_else(|| $b.$f.clone())),* }
    };
}

impl PartialConfig {
    /// Fields set in `self` win over `other`.
    pub fn or(&self, other: &PartialConfig) -> PartialConfig {
        prefer!(
            self,
            other,
            input,
            pos_group,
            neg_group,
            arity,
            min_word_count,
            min_ngram_count,
            min_mi,
            significant_words,
            thresholds,
            static_features,
            dynamic_features,
            eval_budget,
            restart_stagnation,
            k,
            seeds,
            model_size,
            emit_significant_words,
            seed,
            command,
            version
        )
    }

    pub fn from_file(path: &Path) -> Result<PartialConfig> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub input: PathBuf,
    pub pos_group: i64,
    pub neg_group: i64,
    pub arity: usize,
    pub min_word_count: u64,
    pub min_ngram_count: u64,
    pub min_mi: Option<f64>,
    pub significant_words: Option<PathBuf>,
    pub thresholds: usize,
    pub static_features: usize,
    pub dynamic_features: usize,
    pub eval_budget: u64,
    pub restart_stagnation: usize,
    pub k: usize,
    pub seeds: usize,
    pub model_size: usize,
    pub emit_significant_words: SignificantSource,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn resolve(p: &PartialConfig) -> Result<ExperimentConfig> {
        let train = TrainConfig::default();
        let c = ExperimentConfig {
            input: p
                .input
                .clone()
                .context("no input corpus given (--input or `input`)")?,
            pos_group: p.pos_group.unwrap_or(2),
            neg_group: p.neg_group.unwrap_or(3),
            arity: p.arity.unwrap_or(1),
            min_word_count: p.min_word_count.unwrap_or(0),
            min_ngram_count: p.min_ngram_count.unwrap_or(0),
            min_mi: p.min_mi,
            significant_words: p.significant_words.clone(),
            thresholds: p.thresholds.unwrap_or(1),
            static_features: p.static_features.unwrap_or(train.static_features),
            dynamic_features: p.dynamic_features.unwrap_or(train.dynamic_features),
            eval_budget: p.eval_budget.unwrap_or(train.eval_budget),
            restart_stagnation: p.restart_stagnation.unwrap_or(train.restart_stagnation),
            k: p.k.unwrap_or(5),
            seeds: p.seeds.unwrap_or(1),
            model_size: p.model_size.unwrap_or(1),
            emit_significant_words: p.emit_significant_words.unwrap_or_default(),
            seed: p.seed.unwrap_or(0),
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.arity) {
            bail!("arity must be 1..=4, got {}", self.arity);
        }
        if !(1..=3).contains(&self.thresholds) {
            bail!("thresholds must be 1, 2 or 3, got {}", self.thresholds);
        }
        if self.k < 2 {
            bail!("k must be at least 2");
        }
        if self.seeds == 0 || self.model_size == 0 {
            bail!("seeds and model_size must be positive");
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            static_features: self.static_features,
            dynamic_features: self.dynamic_features,
            eval_budget: self.eval_budget,
            seed: self.seed,
            restart_stagnation: self.restart_stagnation,
        }
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let significant_words = match &self.significant_words {
            Some(path) => Some(read_word_list(path)?),
            None => None,
        };
        Ok(PipelineConfig {
            arity: self.arity,
            cuts: CutSpec {
                min_word_count: self.min_word_count,
                min_ngram_count: self.min_ngram_count,
                min_mi: self.min_mi,
                significant_words,
            },
            num_thresholds: self.thresholds,
        })
    }

    /// Every setting spelled out, tagged with the command and version.
    pub fn to_partial(&self, command: &str) -> PartialConfig {
        PartialConfig {
            input: Some(self.input.clone()),
            pos_group: Some(self.pos_group),
            neg_group: Some(self.neg_group),
            arity: Some(self.arity),
            min_word_count: Some(self.min_word_count),
            min_ngram_count: Some(self.min_ngram_count),
            min_mi: self.min_mi,
            significant_words: self.significant_words.clone(),
            thresholds: Some(self.thresholds),
            static_features: Some(self.static_features),
            dynamic_features: Some(self.dynamic_features),
            eval_budget: Some(self.eval_budget),
            restart_stagnation: Some(self.restart_stagnation),
            k: Some(self.k),
            seeds: Some(self.seeds),
            model_size: Some(self.model_size),
            emit_significant_words: Some(self.emit_significant_words),
            seed: Some(self.seed),
            command: Some(command.to_owned()),
            version: Some(env!("CARGO_PKG_VERSION").to_owned()),
        }
    }

    /// TOML that reproduces this run when passed back as `--config`.
    pub fn manifest(&self, command: &str) -> Result<String> {
        Ok(toml::to_string(&self.to_partial(command))?)
    }
}

/// One word per line; blank lines and `#` comments are skipped.
pub fn read_word_list(path: &Path) -> Result<BTreeSet<String>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

/// A sweep: shared settings, grid rows overriding them, and optional model
/// sizes for a voting sweep.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepFile {
    #[serde(flatten)]
    pub base: PartialConfig,
    #[serde(default)]
    pub grid: Vec<GridRow>,
    #[serde(default)]
    pub voting_sizes: Vec<usize>,
    pub voting_models: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GridRow {
    pub label: String,
    #[serde(flatten)]
    pub settings: PartialConfig,
}

impl SweepFile {
    pub fn from_file(path: &Path) -> Result<SweepFile> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_round_trip() {
        for s in ["none", "from-feature-selection:371", "from-ensemble:40"] {
            assert_eq!(s.parse::<SignificantSource>().unwrap().to_string(), s);
        }
        assert!("from-ensemble:0".parse::<SignificantSource>().is_err());
        assert!("bogus".parse::<SignificantSource>().is_err());
    }

    #[test]
    fn file_wins_and_manifest_round_trips() {
        let flags = PartialConfig {
            input: Some("a.jsonl".into()),
            k: Some(3),
            seed: Some(9),
            ..Default::default()
        };
        let file = PartialConfig {
            k: Some(4),
            ..Default::default()
        };
        let c = ExperimentConfig::resolve(&file.or(&flags)).unwrap();
        assert_eq!((c.k, c.seed), (4, 9));
        let text = c.manifest("cv").unwrap();
        let back: PartialConfig = toml::from_str(&text).unwrap();
        assert_eq!(ExperimentConfig::resolve(&back).unwrap(), c);
    }

    #[test]
    fn missing_input_is_an_error() {
        assert!(ExperimentConfig::resolve(&PartialConfig::default()).is_err());
    }
}
