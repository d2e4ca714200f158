//! Corpus replay, accuracy reports and the random-listener baseline.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CorpusError;
use crate::par::{mix_seed, Strategy};
use crate::resolution::{Consistency, Engine};
use crate::scene::{ObjectId, Scene, SceneDocument, SceneState};

/// Descriptive strategy labels carried by corpus records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Colour,
    Extremum,
    Region,
    Combined,
    Grouping,
    Spatial,
    Anaphora,
    Other,
    Error,
}

impl Tag {
    pub const ALL: [Tag; 9] = [
        Tag::Colour,
        Tag::Extremum,
        Tag::Region,
        Tag::Combined,
        Tag::Grouping,
        Tag::Spatial,
        Tag::Anaphora,
        Tag::Other,
        Tag::Error,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Tag::Colour => "Colour",
            Tag::Extremum => "Spatial extrema",
            Tag::Region => "Spatial regions",
            Tag::Combined => "Combined strategies",
            Tag::Grouping => "Grouping",
            Tag::Spatial => "Spatial relations",
            Tag::Anaphora => "Anaphora",
            Tag::Other => "Other",
            Tag::Error => "Errors",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneRef {
    Inline(SceneDocument),
    /// Resolved relative to the corpus file's directory.
    Path(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub session: String,
    /// Position of the record within its session.
    pub index: usize,
    /// Required on the first record of a session, ignored afterwards.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneRef>,
    pub utterance: String,
    pub target: ObjectId,
    #[serde(default)]
    pub tags: Vec<Tag>,
}

/// A parsed corpus file.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub path: PathBuf,
    pub records: Vec<CorpusRecord>,
}

impl Corpus {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Corpus::parse(&text, path)
    }

    /// Blank lines are skipped; `path` is used for error loci and scene files.
    pub fn parse(text: &str, path: &Path) -> Result<Self, CorpusError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: CorpusRecord = serde_json::from_str(line).map_err(|e| CorpusError::Record {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        if records.is_empty() {
            return Err(CorpusError::Empty(path.display().to_string()));
        }
        Ok(Corpus {
            path: path.to_path_buf(),
            records,
        })
    }

    /// Sessions in order of first appearance, each sorted by record index.
    pub fn sessions(&self) -> Result<Vec<(String, Vec<&CorpusRecord>)>, CorpusError> {
        let mut order: Vec<String> = Vec::new();
        let mut by_name: BTreeMap<&str, Vec<&CorpusRecord>> = BTreeMap::new();
        for r in &self.records {
            if !by_name.contains_key(r.session.as_str()) {
                order.push(r.session.clone());
            }
            by_name.entry(&r.session).or_default().push(r);
        }
        order
            .into_iter()
            .map(|name| {
                let mut recs = by_name.remove(name.as_str()).unwrap_or_default();
                recs.sort_by_key(|r| r.index);
                if let Some(w) = recs.windows(2).find(|w| w[0].index == w[1].index) {
                    return Err(CorpusError::Replay {
                        session: name,
                        index: w[0].index,
                        message: "duplicate record index".into(),
                    });
                }
                Ok((name, recs))
            })
            .collect()
    }

    fn load_scene(&self, session: &str, first: &CorpusRecord) -> Result<Scene, CorpusError> {
        let replay = |message: String| CorpusError::Replay {
            session: session.to_string(),
            index: first.index,
            message,
        };
        match &first.scene {
            None => Err(replay("first record of a session must carry a scene".into())),
            Some(SceneRef::Inline(doc)) => Ok(Scene::from_document(doc)?),
            Some(SceneRef::Path(p)) => {
                let base = self.path.parent().unwrap_or_else(|| Path::new("."));
                Ok(Scene::load(base.join(p))?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub session: String,
    pub index: usize,
    pub utterance: String,
    pub target: ObjectId,
    pub chosen: Option<ObjectId>,
    pub correct: bool,
    pub consistency: Consistency,
    pub tags: Vec<Tag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl ReportRow {
    fn new(label: &str, outcomes: &[&RecordOutcome]) -> Self {
        let correct = outcomes.iter().filter(|o| o.correct).count();
        ReportRow {
            label: label.to_string(),
            correct,
            total: outcomes.len(),
            accuracy: if outcomes.is_empty() {
                0.0
            } else {
                correct as f64 / outcomes.len() as f64
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub rows: Vec<ReportRow>,
    pub outcomes: Vec<RecordOutcome>,
}

impl EvalReport {
    pub fn from_outcomes(outcomes: Vec<RecordOutcome>) -> Self {
        let all: Vec<&RecordOutcome> = outcomes.iter().collect();
        let mut rows = vec![ReportRow::new("All", &all)];
        let no_other: Vec<&RecordOutcome> = all.iter().copied().filter(|o| !o.tags.contains(&Tag::Other)).collect();
        rows.push(ReportRow::new("All except Other", &no_other));
        for tag in Tag::ALL {
            let tagged: Vec<&RecordOutcome> = all.iter().copied().filter(|o| o.tags.contains(&tag)).collect();
            if !tagged.is_empty() {
                rows.push(ReportRow::new(tag.label(), &tagged));
            }
        }
        EvalReport {
            accuracy: rows[0].accuracy,
            rows,
            outcomes,
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>9} {:>9}", "Utterance set", "Accuracy", "Count");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<24} {:>8.1}% {:>4}/{:<4}",
                row.label,
                100.0 * row.accuracy,
                row.correct,
                row.total
            );
        }
        for o in self.outcomes.iter().filter(|o| !o.correct) {
            let chosen = o.chosen.map_or_else(|| "none".to_string(), |c| c.to_string());
            let _ = writeln!(
                out,
                "MISS {}#{} {:?}: target {} chosen {} ({:?})",
                o.session, o.index, o.utterance, o.target, chosen, o.consistency
            );
        }
        f.write_str(&out)
    }
}

fn session_stream(name: &str) -> u64 {
    // FNV-1a, stable across platforms and toolchains.
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Replays every session, removing each record's target before the next
/// utterance whether or not it was resolved correctly.
pub fn evaluate(corpus: &Corpus, engine: &Engine, seed: u64, strategy: Strategy) -> Result<EvalReport, CorpusError> {
    let sessions = corpus.sessions()?;
    let per_session = strategy.map(&sessions, |(name, recs)| {
        replay_session(corpus, engine, seed, name, recs)
    });
    let mut outcomes = Vec::new();
    for s in per_session {
        outcomes.extend(s?);
    }
    Ok(EvalReport::from_outcomes(outcomes))
}

fn replay_session(
    corpus: &Corpus,
    engine: &Engine,
    seed: u64,
    name: &str,
    recs: &[&CorpusRecord],
) -> Result<Vec<RecordOutcome>, CorpusError> {
    let mut state = SceneState::new(corpus.load_scene(name, recs[0])?);
    let session_seed = mix_seed(seed, session_stream(name));
    let mut outcomes = Vec::with_capacity(recs.len());
    for rec in recs {
        if !state.scene().contains(rec.target) {
            return Err(CorpusError::Replay {
                session: name.to_string(),
                index: rec.index,
                message: format!("target {} is not in the scene", rec.target),
            });
        }
        let res = engine.resolve(&rec.utterance, &state, mix_seed(session_seed, rec.index as u64));
        outcomes.push(RecordOutcome {
            session: name.to_string(),
            index: rec.index,
            utterance: rec.utterance.clone(),
            target: rec.target,
            chosen: res.chosen,
            correct: res.chosen == Some(rec.target),
            consistency: res.consistency,
            tags: rec.tags.clone(),
        });
        state = state.remove_object(rec.target)?;
    }
    Ok(outcomes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub sessions: usize,
    pub trials: usize,
    pub objects: usize,
    pub mean: f64,
    pub std_error: f64,
    /// Closed-form expectation `(1/T) Σ_{t<T} 1/(N − t)`.
    pub expected: f64,
}

/// Error for nonsensical baseline parameters.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("baseline needs sessions >= 1 and 1 <= trials <= objects (got {sessions}, {trials}, {objects})")]
pub struct BaselineError {
    pub sessions: usize,
    pub trials: usize,
    pub objects: usize,
}

/// Monte Carlo of a listener guessing uniformly among the objects still on
/// the board; a correct guess or not, the target leaves the scene.
pub fn baseline(
    sessions: usize,
    trials: usize,
    objects: usize,
    seed: u64,
    strategy: Strategy,
) -> Result<BaselineReport, BaselineError> {
    if sessions == 0 || trials == 0 || trials > objects {
        return Err(BaselineError {
            sessions,
            trials,
            objects,
        });
    }
    let rates = strategy.map_range(sessions, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, s as u64));
        let hits = (0..trials).filter(|t| rng.random_range(0..objects - t) == 0).count();
        hits as f64 / trials as f64
    });
    let n = sessions as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = if sessions > 1 {
        rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let expected = (0..trials).map(|t| 1.0 / (objects - t) as f64).sum::<f64>() / trials as f64;
    Ok(BaselineReport {
        sessions,
        trials,
        objects,
        mean,
        std_error: (var / n).sqrt(),
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene_line(session: &str, index: usize, utterance: &str, target: u32, tags: &str) -> String {
        let scene = crate::scene::generate_layout(5, 6).unwrap().to_json();
        let scene: serde_json::Value = serde_json::from_str(&scene).unwrap();
        let mut v = serde_json::json!({
            "session": session, "index": index, "utterance": utterance, "target": target,
            "tags": serde_json::from_str::<serde_json::Value>(tags).unwrap(),
        });
        if index == 0 {
            v["scene"] = scene;
        }
        v.to_string()
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            Corpus::parse("\n\n", Path::new("x.jsonl")),
            Err(CorpusError::Empty(_))
        ));
    }

    #[test]
    fn bad_line_reports_locus() {
        let text = format!("{}\n{{oops", scene_line("s", 0, "x", 0, "[]"));
        match Corpus::parse(&text, Path::new("c.jsonl")) {
            Err(CorpusError::Record { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_scene_is_a_replay_error() {
        let text = r#"{"session":"s","index":0,"utterance":"x","target":0}"#;
        let corpus = Corpus::parse(text, Path::new("c.jsonl")).unwrap();
        assert!(matches!(
            evaluate(&corpus, &Engine::packaged(), 0, Strategy::Sequential),
            Err(CorpusError::Replay { .. })
        ));
    }

    #[test]
    fn other_rows_separate() {
        let outcome = |correct, tags: Vec<Tag>| RecordOutcome {
            session: "s".into(),
            index: 0,
            utterance: String::new(),
            target: ObjectId(0),
            chosen: None,
            correct,
            consistency: Consistency::NoReferent,
            tags,
        };
        let report = EvalReport::from_outcomes(vec![
            outcome(true, vec![Tag::Colour]),
            outcome(true, vec![Tag::Extremum]),
            outcome(false, vec![Tag::Other]),
        ]);
        assert_eq!(report.rows[0].label, "All");
        assert!((report.rows[0].accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.rows[1].label, "All except Other");
        assert_eq!(report.rows[1].accuracy, 1.0);
        assert!(report.to_string().contains("Other"));
    }

    #[test]
    fn baseline_edge_cases() {
        let one = baseline(50, 1, 1, 3, Strategy::Sequential).unwrap();
        assert_eq!(one.mean, 1.0);
        let b = baseline(4000, 1, 4, 3, Strategy::Sequential).unwrap();
        assert!((b.mean - 0.25).abs() < 0.03);
        assert_eq!(b.expected, 0.25);
        assert!(baseline(0, 1, 1, 0, Strategy::Sequential).is_err());
        assert!(baseline(1, 31, 30, 0, Strategy::Sequential).is_err());
        assert_eq!(
            baseline(100, 30, 30, 9, Strategy::Sequential),
            baseline(100, 30, 30, 9, Strategy::Parallel)
        );
    }
}
