//! The grounded lexicon: word senses with grammatical category, arity,
//! reference behaviour and a composer specification, plus the Gaussian colour
//! models and the grammar that the parser runs.
//!
//! Everything is data. The packaged lexicon ships inside the crate and can be
//! replaced by any file in the same format.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{FitError, LexiconError};
use crate::par::mix_seed;
use crate::scene::{generate_scene, ColourClass};
use crate::vision::reference_vector;

pub const LEXICON_FORMAT: &str = "bishop-lexicon v1";
pub const DEFAULT_GAMMA: f64 = 0.38;
const PACKAGED_LEXICON: &str = include_str!("../data/lexicon.json");
const FIT_JITTER: f64 = 1e-6;

#[allow(clippy::upper_case_acronyms)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    ADJ,
    CADJ,
    N,
    REL,
    VPRES,
    RELVPRES,
    ART,
    SPEC,
    P,
    POF,
    PAT,
    PIN,
    NP,
}

impl Category {
    pub const ALL: [Category; 13] = [
        Category::ADJ,
        Category::CADJ,
        Category::N,
        Category::REL,
        Category::VPRES,
        Category::RELVPRES,
        Category::ART,
        Category::SPEC,
        Category::P,
        Category::POF,
        Category::PAT,
        Category::PIN,
        Category::NP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::ADJ => "ADJ",
            Category::CADJ => "CADJ",
            Category::N => "N",
            Category::REL => "REL",
            Category::VPRES => "VPRES",
            Category::RELVPRES => "RELVPRES",
            Category::ART => "ART",
            Category::SPEC => "SPEC",
            Category::P => "P",
            Category::POF => "POF",
            Category::PAT => "PAT",
            Category::PIN => "PIN",
            Category::NP => "NP",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// What a word sense refers to on its own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefBehaviour {
    #[default]
    None,
    Single,
    Group,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extreme {
    Min,
    Max,
}

/// Reference point of a region composer: a named point or board coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionPoint {
    Named(String),
    Board([f64; 2]),
}

impl RegionPoint {
    /// Point in board units, if the name is known.
    pub fn board(&self) -> Option<[f64; 2]> {
        match self {
            RegionPoint::Named(n) if n == "centre" => Some([0.5, 0.5]),
            RegionPoint::Named(_) => None,
            RegionPoint::Board(p) => Some(*p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ComposerSpec {
    ColourProbabilistic {
        model: String,
    },
    OrderingExtremum {
        axis: Axis,
        extreme: Extreme,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    OrderingRegion {
        point: RegionPoint,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    Grouping {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
    },
    Spatial {
        direction: String,
    },
    Anaphoric,
    Select,
    Bridge,
    GroupSplit,
    Identity,
}

impl ComposerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ComposerSpec::ColourProbabilistic { .. } => "ColourProbabilistic",
            ComposerSpec::OrderingExtremum { .. } => "OrderingExtremum",
            ComposerSpec::OrderingRegion { .. } => "OrderingRegion",
            ComposerSpec::Grouping { .. } => "Grouping",
            ComposerSpec::Spatial { .. } => "Spatial",
            ComposerSpec::Anaphoric => "Anaphoric",
            ComposerSpec::Select => "Select",
            ComposerSpec::Bridge => "Bridge",
            ComposerSpec::GroupSplit => "GroupSplit",
            ComposerSpec::Identity => "Identity",
        }
    }

    /// Two-argument composers; all others take at most one concept.
    pub fn is_binary(&self) -> bool {
        matches!(
            self,
            ComposerSpec::Spatial { .. } | ComposerSpec::Bridge | ComposerSpec::GroupSplit
        )
    }

    pub fn is_ordering(&self) -> bool {
        matches!(
            self,
            ComposerSpec::OrderingExtremum { .. } | ComposerSpec::OrderingRegion { .. }
        )
    }

    fn accepts_arity(&self, arity: usize) -> bool {
        if self.is_binary() {
            arity == 2
        } else {
            arity <= 1
        }
    }

    /// Short chart label, e.g. `O.x.min`, `P(purple)`, `S`.
    pub fn label(&self) -> String {
        match self {
            ComposerSpec::ColourProbabilistic { model } => format!("P({model})"),
            ComposerSpec::OrderingExtremum { axis, extreme, .. } => {
                let a = if *axis == Axis::X { "x" } else { "y" };
                let e = if *extreme == Extreme::Min { "min" } else { "max" };
                format!("O.{a}.{e}")
            }
            ComposerSpec::OrderingRegion { point, .. } => match point {
                RegionPoint::Named(n) => format!("O.region.{n}"),
                RegionPoint::Board([x, y]) => format!("O.region({x},{y})"),
            },
            ComposerSpec::Grouping { count: Some(k) } => format!("G{k}"),
            ComposerSpec::Grouping { count: None } => "G".into(),
            ComposerSpec::Spatial { direction } => format!("SP.{direction}"),
            ComposerSpec::Anaphoric => "A".into(),
            ComposerSpec::Select => "S".into(),
            ComposerSpec::Bridge => "B".into(),
            ComposerSpec::GroupSplit => "B.of".into(),
            ComposerSpec::Identity => "I".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexicalEntry {
    pub word: String,
    pub category: Category,
    pub arity: usize,
    #[serde(rename = "ref", default)]
    pub ref_behaviour: RefBehaviour,
    pub composer: ComposerSpec,
}

/// Three-dimensional Gaussian over RGB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ColourModelDoc", into = "ColourModelDoc")]
pub struct ColourModel {
    pub name: String,
    pub mean: [f64; 3],
    pub cov: [[f64; 3]; 3],
    inverse: Matrix3<f64>,
    peak: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ColourModelDoc {
    name: String,
    mean: [f64; 3],
    cov: [[f64; 3]; 3],
}

impl TryFrom<ColourModelDoc> for ColourModel {
    type Error = String;

    fn try_from(doc: ColourModelDoc) -> Result<Self, Self::Error> {
        ColourModel::new(doc.name.clone(), doc.mean, doc.cov).map_err(|e| format!("colour model {:?}: {e}", doc.name))
    }
}

impl From<ColourModel> for ColourModelDoc {
    fn from(m: ColourModel) -> Self {
        ColourModelDoc {
            name: m.name,
            mean: m.mean,
            cov: m.cov,
        }
    }
}

impl ColourModel {
    /// Builds a model; the covariance must be symmetric positive definite.
    pub fn new(name: impl Into<String>, mean: [f64; 3], cov: [[f64; 3]; 3]) -> Result<Self, FitError> {
        let m = Matrix3::from_fn(|r, c| cov[r][c]);
        if (m - m.transpose()).abs().max() > 1e-9 * m.abs().max().max(1.0) {
            return Err(FitError::NotPositiveDefinite);
        }
        let chol = m.cholesky().ok_or(FitError::NotPositiveDefinite)?;
        let det = chol.determinant();
        if !(det.is_finite() && det > 0.0) {
            return Err(FitError::NotPositiveDefinite);
        }
        Ok(ColourModel {
            name: name.into(),
            mean,
            cov,
            inverse: chol.inverse(),
            peak: ((2.0 * std::f64::consts::PI).powi(3) * det).sqrt().recip(),
        })
    }

    /// Density at the mean, `((2π)³|Σ|)^{-1/2}`.
    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn mahalanobis_sq(&self, rgb: [f64; 3]) -> f64 {
        let d = Vector3::new(rgb[0] - self.mean[0], rgb[1] - self.mean[1], rgb[2] - self.mean[2]);
        (d.transpose() * self.inverse * d)[(0, 0)]
    }

    /// Full Gaussian density, floored at the smallest positive f64 so that
    /// far-off colours keep a (tiny) positive weight.
    pub fn pdf(&self, rgb: [f64; 3]) -> f64 {
        (self.peak * (-0.5 * self.mahalanobis_sq(rgb)).exp()).max(f64::MIN_POSITIVE)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.cov[r][c])
    }
}

const ZERO_VARIANCE_TOL: f64 = 1e-12;

/// Maximum-likelihood Gaussian fit. A tiny diagonal jitter is added only if
/// the plain covariance fails Cholesky.
pub fn fit_colour_model(name: &str, samples: &[[f64; 3]]) -> Result<ColourModel, FitError> {
    if samples.len() < 4 {
        return Err(FitError::TooFewSamples(samples.len()));
    }
    let n = samples.len() as f64;
    let mut mean = [0.0; 3];
    for s in samples {
        for k in 0..3 {
            mean[k] += s[k] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for s in samples {
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += (s[r] - mean[r]) * (s[c] - mean[c]) / n;
            }
        }
    }
    for (k, row) in cov.iter().enumerate() {
        if row[k] <= ZERO_VARIANCE_TOL * mean[k].abs().max(1.0).powi(2) {
            return Err(FitError::ZeroVariance(k));
        }
    }
    ColourModel::new(name, mean, cov).or_else(|_| {
        let mut jittered = cov;
        for (k, row) in jittered.iter_mut().enumerate() {
            row[k] += FIT_JITTER;
        }
        ColourModel::new(name, mean, jittered)
    })
}

/// Per-pixel RGB samples from `per_class` labelled rendered cones of each
/// colour class, drawn from seeded 30-cone scenes.
pub fn colour_training_samples(seed: u64, per_class: usize) -> BTreeMap<&'static str, Vec<[f64; 3]>> {
    let mut samples: BTreeMap<&'static str, Vec<[f64; 3]>> = BTreeMap::new();
    let mut counts: HashMap<ColourClass, usize> = HashMap::new();
    let mut stream = 0u64;
    while counts.values().sum::<usize>() < 2 * per_class {
        let state = generate_scene(mix_seed(seed, stream), 30).expect("30-cone scenes are feasible");
        stream += 1;
        let frame = &state.current;
        for obj in &frame.scene.objects {
            let done = counts.entry(obj.colour).or_default();
            if *done >= per_class {
                continue;
            }
            *done += 1;
            let region = frame.features().region(obj.id).expect("generated cones are visible");
            let out = samples.entry(obj.colour.name()).or_default();
            out.extend(region.pixels.iter().map(|&(x, y)| {
                let p = frame.raster.rgb[frame.raster.index(x, y)];
                [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])]
            }));
        }
    }
    samples
}

/// Fits the "green" and "purple" models from rendered training cones.
pub fn fit_default_colour_models(seed: u64, per_class: usize) -> Result<Vec<ColourModel>, FitError> {
    colour_training_samples(seed, per_class)
        .into_iter()
        .map(|(name, px)| fit_colour_model(name, &px))
        .collect()
}

/// Application template `T_f(T_a, …)`: the composer of tail constituent `f`
/// is applied to the concepts of tail constituents `args`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Template {
    pub functor: usize,
    pub args: Vec<usize>,
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|a| format!("T{a}")).collect();
        write!(f, "T{}({})", self.functor, args.join(","))
    }
}

impl FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || format!("malformed template {s:?}");
        let (head, rest) = compact.split_once('(').ok_or_else(bad)?;
        let inner = rest.strip_suffix(')').ok_or_else(bad)?;
        let index =
            |t: &str| -> Result<usize, String> { t.strip_prefix('T').and_then(|d| d.parse().ok()).ok_or_else(bad) };
        let functor = index(head)?;
        let args = if inner.is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(index).collect::<Result<_, _>>()?
        };
        Ok(Template { functor, args })
    }
}

impl Serialize for Template {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Template {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GrammarRule {
    pub head: Category,
    pub tail: Vec<Category>,
    pub templates: Vec<Template>,
}

impl GrammarRule {
    fn new(head: Category, tail: &[Category], template: &str) -> Self {
        GrammarRule {
            head,
            tail: tail.to_vec(),
            templates: vec![template.parse().expect("static template")],
        }
    }

    /// `NP <- ART NP` style name used in chart dumps.
    pub fn name(&self) -> String {
        let tail: Vec<&str> = self.tail.iter().map(|c| c.name()).collect();
        format!("{} <- {}", self.head, tail.join(" "))
    }

    fn validate(&self, index: usize) -> Result<(), LexiconError> {
        let err = |message: String| LexiconError::Grammar { index, message };
        if self.tail.is_empty() {
            return Err(err("empty tail".into()));
        }
        if self.templates.is_empty() {
            return Err(err("no argument structure".into()));
        }
        for t in &self.templates {
            let mut used: HashSet<usize> = HashSet::new();
            for &i in std::iter::once(&t.functor).chain(&t.args) {
                if i >= self.tail.len() {
                    return Err(err(format!(
                        "template {t} names T{i} but the tail has {} symbols",
                        self.tail.len()
                    )));
                }
                if !used.insert(i) {
                    return Err(err(format!("template {t} uses T{i} twice")));
                }
            }
            if t.args.len() > 2 {
                return Err(err(format!("template {t} passes more than two arguments")));
            }
        }
        Ok(())
    }
}

/// The nineteen rules with their argument structures.
pub fn default_grammar() -> Vec<GrammarRule> {
    use Category::*;
    vec![
        GrammarRule::new(ADJ, &[ADJ, ADJ], "T1(T0)"),
        GrammarRule::new(NP, &[ADJ, NP], "T0(T1)"),
        GrammarRule::new(NP, &[CADJ, N], "T0(T1)"),
        GrammarRule::new(NP, &[N], "T0()"),
        GrammarRule::new(NP, &[ART, NP], "T0(T1)"),
        GrammarRule::new(NP, &[NP, P, NP], "T1(T0,T2)"),
        GrammarRule::new(NP, &[NP, P, ART, N, POF, NP], "T3(T0,T5)"),
        GrammarRule::new(NP, &[NP, RELVPRES, P, ART, N, POF, NP], "T3(T0,T5)"),
        GrammarRule::new(NP, &[NP, P, N, POF, NP], "T2(T0,T4)"),
        GrammarRule::new(NP, &[NP, REL, VPRES, NP], "T1(T0,T3)"),
        GrammarRule::new(NP, &[NP, REL, P, NP], "T2(T0,T3)"),
        GrammarRule::new(NP, &[NP, REL, VPRES, P, NP], "T3(T0,T4)"),
        GrammarRule::new(NP, &[NP, RELVPRES, P, NP], "T2(T0,T3)"),
        GrammarRule::new(NP, &[NP, REL, VPRES, ADJ], "T3(T0)"),
        GrammarRule::new(NP, &[NP, RELVPRES, ADJ], "T2(T0)"),
        GrammarRule::new(NP, &[NP, REL, CADJ], "T2(T0)"),
        GrammarRule::new(P, &[SPEC, P], "T0(T1)"),
        GrammarRule::new(P, &[P, P], "T1()"),
        GrammarRule::new(P, &[POF], "T0()"),
    ]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LexiconDocument {
    format: String,
    colour_models: Vec<ColourModel>,
    entries: Vec<LexicalEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grammar: Option<Vec<GrammarRule>>,
}

/// Validated, immutable lexicon plus grammar.
#[derive(Clone, Debug)]
pub struct Lexicon {
    colour_models: Vec<ColourModel>,
    entries: Vec<LexicalEntry>,
    grammar: Vec<GrammarRule>,
    by_word: HashMap<String, Vec<usize>>,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.colour_models == other.colour_models && self.entries == other.entries && self.grammar == other.grammar
    }
}

impl Lexicon {
    pub fn new(
        colour_models: Vec<ColourModel>,
        entries: Vec<LexicalEntry>,
        grammar: Vec<GrammarRule>,
    ) -> Result<Self, LexiconError> {
        let mut model_names = HashSet::new();
        for m in &colour_models {
            if !model_names.insert(m.name.as_str()) {
                return Err(LexiconError::Model {
                    name: m.name.clone(),
                    message: "defined twice".into(),
                });
            }
        }
        let mut seen = HashSet::new();
        let mut by_word: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            validate_entry(e, &model_names)?;
            if !seen.insert((e.word.as_str(), e.category, e.composer.kind())) {
                return Err(LexiconError::Duplicate {
                    word: e.word.clone(),
                    category: e.category.to_string(),
                    kind: e.composer.kind(),
                });
            }
            by_word.entry(e.word.clone()).or_default().push(i);
        }
        for (i, rule) in grammar.iter().enumerate() {
            rule.validate(i)?;
        }
        Ok(Lexicon {
            colour_models,
            entries,
            grammar,
            by_word,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let doc: LexiconDocument = serde_json::from_str(text).map_err(|e| LexiconError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if doc.format != LEXICON_FORMAT {
            return Err(LexiconError::Format(doc.format));
        }
        Lexicon::new(
            doc.colour_models,
            doc.entries,
            doc.grammar.unwrap_or_else(default_grammar),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Lexicon::from_json(&std::fs::read_to_string(path)?)
    }

    /// The lexicon bundled with this crate.
    pub fn packaged() -> Self {
        Lexicon::from_json(PACKAGED_LEXICON).expect("packaged lexicon is valid")
    }

    pub fn to_json(&self) -> String {
        let doc = LexiconDocument {
            format: LEXICON_FORMAT.to_string(),
            colour_models: self.colour_models.clone(),
            entries: self.entries.clone(),
            grammar: Some(self.grammar.clone()),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("lexicon serialises");
        out.push('\n');
        out
    }

    /// Entries for a (lowercase) token; empty means the word is unknown.
    pub fn lookup(&self, token: &str) -> Vec<&LexicalEntry> {
        self.by_word
            .get(token)
            .map(|ix| ix.iter().map(|&i| &self.entries[i]).collect())
            .unwrap_or_default()
    }

    pub fn is_known(&self, token: &str) -> bool {
        self.by_word.contains_key(token)
    }

    pub fn entries(&self) -> &[LexicalEntry] {
        &self.entries
    }

    pub fn grammar(&self) -> &[GrammarRule] {
        &self.grammar
    }

    pub fn colour_models(&self) -> &[ColourModel] {
        &self.colour_models
    }

    pub fn colour_model(&self, name: &str) -> Option<&ColourModel> {
        self.colour_models.iter().find(|m| m.name == name)
    }

    /// Copy with the colour models replaced (same names required).
    pub fn with_colour_models(&self, models: Vec<ColourModel>) -> Result<Self, LexiconError> {
        Lexicon::new(models, self.entries.clone(), self.grammar.clone())
    }

    pub fn with_grammar(&self, grammar: Vec<GrammarRule>) -> Result<Self, LexiconError> {
        Lexicon::new(self.colour_models.clone(), self.entries.clone(), grammar)
    }
}

/// Fits fresh colour models for every model named in `lexicon`.
pub fn refit_colour_models(lexicon: &Lexicon, seed: u64, per_class: usize) -> Result<Lexicon, LexiconError> {
    let fitted = fit_default_colour_models(seed, per_class)?;
    let models = lexicon
        .colour_models()
        .iter()
        .map(|m| {
            fitted
                .iter()
                .find(|f| f.name == m.name)
                .cloned()
                .ok_or_else(|| LexiconError::Model {
                    name: m.name.clone(),
                    message: "no training class with this name".into(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    lexicon.with_colour_models(models)
}

fn validate_entry(e: &LexicalEntry, models: &HashSet<&str>) -> Result<(), LexiconError> {
    let entry_err = |message: String| LexiconError::Entry {
        word: e.word.clone(),
        category: e.category.to_string(),
        message,
    };
    if e.word.is_empty() || e.word != e.word.to_lowercase() || e.word.chars().any(char::is_whitespace) {
        return Err(entry_err("words must be single lowercase tokens".into()));
    }
    if e.category == Category::NP {
        return Err(entry_err("NP is not a lexical category".into()));
    }
    if !e.composer.accepts_arity(e.arity) {
        return Err(LexiconError::Arity {
            word: e.word.clone(),
            category: e.category.to_string(),
            arity: e.arity,
            kind: e.composer.kind(),
        });
    }
    let check_gamma = |g: &Option<f64>| match g {
        Some(g) if !(*g > 0.0 && *g < 1.0) => Err(entry_err(format!("gamma {g} outside (0, 1)"))),
        _ => Ok(()),
    };
    match &e.composer {
        ComposerSpec::ColourProbabilistic { model } if !models.contains(model.as_str()) => {
            return Err(LexiconError::DanglingModel {
                word: e.word.clone(),
                model: model.clone(),
            })
        }
        ComposerSpec::OrderingExtremum { gamma, .. } => check_gamma(gamma)?,
        ComposerSpec::OrderingRegion { point, gamma } => {
            check_gamma(gamma)?;
            if point.board().is_none() {
                return Err(entry_err(format!("unknown region point {point:?}")));
            }
        }
        ComposerSpec::Grouping { count: Some(k) } if *k < 2 => {
            return Err(entry_err(format!("group count {k} must be at least 2")));
        }
        ComposerSpec::Spatial { direction } if reference_vector(direction).is_none() => {
            return Err(entry_err(format!("unknown direction {direction:?}")));
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn entry_json(word: &str, category: &str, arity: usize, composer: &str) -> String {
        format!(r#"{{"word":"{word}","category":"{category}","arity":{arity},"ref":"none","composer":{composer}}}"#)
    }

    fn doc(entries: &[String]) -> String {
        format!(
            r#"{{"format":"bishop-lexicon v1","colour_models":[{{"name":"green","mean":[60,170,70],"cov":[[100,0,0],[0,100,0],[0,0,100]]}}],"entries":[{}]}}"#,
            entries.join(",")
        )
    }

    #[test]
    fn loads_single_extremum_entry() {
        let lex = Lexicon::from_json(&doc(&[entry_json(
            "leftmost",
            "ADJ",
            1,
            r#"{"kind":"OrderingExtremum","axis":"x","extreme":"min"}"#,
        )]))
        .unwrap();
        assert_eq!(lex.lookup("leftmost").len(), 1);
        assert_eq!(lex.grammar().len(), 19);
    }

    #[test]
    fn spatial_with_one_argument_is_rejected() {
        let err = Lexicon::from_json(&doc(&[entry_json(
            "left",
            "N",
            1,
            r#"{"kind":"Spatial","direction":"left"}"#,
        )]))
        .unwrap_err();
        assert!(
            matches!(
                err,
                LexiconError::Arity {
                    arity: 1,
                    kind: "Spatial",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn rejects_duplicates_dangling_models_and_unknown_kinds() {
        let e = entry_json("the", "ART", 1, r#"{"kind":"Select"}"#);
        assert!(matches!(
            Lexicon::from_json(&doc(&[e.clone(), e])),
            Err(LexiconError::Duplicate { .. })
        ));
        let dangling = entry_json("red", "CADJ", 1, r#"{"kind":"ColourProbabilistic","model":"red"}"#);
        assert!(matches!(
            Lexicon::from_json(&doc(&[dangling])),
            Err(LexiconError::DanglingModel { .. })
        ));
        let unknown = entry_json("zap", "N", 0, r#"{"kind":"Teleport"}"#);
        assert!(matches!(
            Lexicon::from_json(&doc(&[unknown])),
            Err(LexiconError::Parse { .. })
        ));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "{\n\"format\": \"bishop-lexicon v1\",\n\"entries\": [,]\n}";
        match Lexicon::from_json(text) {
            Err(LexiconError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn packaged_lexicon_senses() {
        let lex = Lexicon::packaged();
        let left = lex.lookup("left");
        assert!(left.iter().any(|e| e.composer.is_ordering()));
        assert!(left.iter().any(|e| matches!(e.composer, ComposerSpec::Spatial { .. })));
        let purple = lex.lookup("purple");
        let cats: HashSet<Category> = purple.iter().map(|e| e.category).collect();
        assert!(cats.contains(&Category::CADJ) && cats.contains(&Category::N));
        assert!(purple.iter().all(|e| e.composer == purple[0].composer));
        let the = lex.lookup("the");
        assert_eq!(the.len(), 1);
        assert_eq!(the[0].category, Category::ART);
        assert_eq!(the[0].composer, ComposerSpec::Select);
        assert!(lex.lookup("zzzq").is_empty());
    }

    #[test]
    fn serialisation_round_trip() {
        let lex = Lexicon::packaged();
        let again = Lexicon::from_json(&lex.to_json()).unwrap();
        assert_eq!(lex, again);
        assert_eq!(again.to_json(), lex.to_json());
    }

    #[test]
    fn template_syntax() {
        let t: Template = "T1(T0, T2)".parse().unwrap();
        assert_eq!(
            t,
            Template {
                functor: 1,
                args: vec![0, 2]
            }
        );
        assert_eq!(t.to_string(), "T1(T0,T2)");
        assert_eq!("T0()".parse::<Template>().unwrap().args, Vec::<usize>::new());
        assert!("T0(X1)".parse::<Template>().is_err());
        let bad = GrammarRule {
            head: Category::NP,
            tail: vec![Category::N],
            templates: vec!["T1()".parse().unwrap()],
        };
        assert!(Lexicon::packaged().with_grammar(vec![bad]).is_err());
    }

    #[test]
    fn fit_rejects_degenerate_samples() {
        assert_eq!(
            fit_colour_model("x", &[[1.0, 2.0, 3.0]; 3]).unwrap_err(),
            FitError::TooFewSamples(3)
        );
        assert_eq!(
            fit_colour_model("x", &[[1.0, 2.0, 3.0]; 10]).unwrap_err(),
            FitError::ZeroVariance(0)
        );
    }

    #[test]
    fn fit_recovers_known_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mu = [120.0, 60.0, 150.0];
        let sigma = [8.0, 5.0, 11.0];
        let normals: Vec<Normal<f64>> = (0..3).map(|k| Normal::new(mu[k], sigma[k]).unwrap()).collect();
        let samples: Vec<[f64; 3]> = (0..500)
            .map(|_| {
                [
                    normals[0].sample(&mut rng),
                    normals[1].sample(&mut rng),
                    normals[2].sample(&mut rng),
                ]
            })
            .collect();
        let m = fit_colour_model("test", &samples).unwrap();
        for k in 0..3 {
            assert!(
                (m.mean[k] - mu[k]).abs() < 3.0 * sigma[k] / (500f64).sqrt(),
                "channel {k}"
            );
        }
    }

    #[test]
    fn pdf_peaks_at_mean() {
        let m = ColourModel::new(
            "m",
            [10.0, 20.0, 30.0],
            [[4.0, 1.0, 0.0], [1.0, 9.0, 2.0], [0.0, 2.0, 16.0]],
        )
        .unwrap();
        let at_mean = m.pdf(m.mean);
        let det = m.covariance().determinant();
        let expected = 1.0 / ((2.0 * std::f64::consts::PI).powi(3) * det).sqrt();
        assert!((at_mean - expected).abs() < 1e-15);
        let eig = m.covariance().symmetric_eigen();
        for k in 0..3 {
            let v = eig.eigenvectors.column(k) * (3.0 * eig.eigenvalues[k].sqrt());
            let far = [m.mean[0] + v[0], m.mean[1] + v[1], m.mean[2] + v[2]];
            assert!(at_mean >= m.pdf(far));
        }
        assert!(ColourModel::new("bad", [0.0; 3], [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }
}
