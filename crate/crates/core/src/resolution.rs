//! Post-parse filtering and the top-level `resolve` entry point.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composition::{referents_group, Concept, Epoch, RefKind, Scope, DEFAULT_REL_THRESHOLD};
use crate::lexicon::{Category, Lexicon};
use crate::parser::{parse, tokenize, Chart};
use crate::scene::{ObjectId, SceneState};
use crate::vision::{VisionConfig, VisionContext};

/// Relative margin below which the top two weights count as tied.
pub const AMBIGUITY_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Consistency {
    Consistent,
    WithinGroupAmbiguity,
    ContradictingConstituents,
    NoReferent,
}

/// A longest referring constituent.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub span: (usize, usize),
    pub category: Category,
    pub concept: Concept,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Referent {
    pub id: ObjectId,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub span: [usize; 2],
    pub category: String,
    pub ref_kind: RefKind,
    pub determinate: bool,
    /// Ranked by weight, heaviest first.
    pub referents: Vec<Referent>,
    /// The group-threshold referent set.
    pub group: Vec<ObjectId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub chosen: Option<ObjectId>,
    pub consistency: Consistency,
    pub used_random_tiebreak: bool,
    pub seed: u64,
    pub candidates: Vec<CandidateReport>,
}

fn top_is_tied(concept: &Concept) -> bool {
    let ranked = concept.ranked();
    match ranked.as_slice() {
        [(_, w1), (_, w2), ..] => *w1 <= 0.0 || (w1 - w2) / w1 <= AMBIGUITY_MARGIN,
        _ => false,
    }
}

fn tied_top(concept: &Concept) -> Vec<ObjectId> {
    let ranked = concept.ranked();
    let Some(&(_, best)) = ranked.first() else {
        return Vec::new();
    };
    ranked
        .iter()
        .take_while(|(_, w)| best <= 0.0 || (best - w) / best <= AMBIGUITY_MARGIN)
        .map(|(id, _)| *id)
        .collect()
}

/// Keeps the referring edges of maximal covered length and checks that they
/// agree.
pub fn filter_candidates(chart: &Chart, rel_threshold: f64) -> (Vec<Candidate>, Consistency) {
    let referring: Vec<_> = chart
        .referring_edges()
        .filter(|e| e.meaning.concept.epoch == Epoch::Current)
        .collect();
    let Some(longest) = referring.iter().map(|e| e.len()).max() else {
        return (Vec::new(), Consistency::NoReferent);
    };
    let mut seen = BTreeSet::new();
    let mut candidates = Vec::new();
    for e in referring.into_iter().filter(|e| e.len() == longest) {
        if seen.insert((e.start, e.end, e.meaning.concept.fingerprint())) {
            candidates.push(Candidate {
                span: (e.start, e.end),
                category: e.category,
                concept: e.meaning.concept.clone(),
            });
        }
    }
    let verdict = check(&candidates, rel_threshold);
    (candidates, verdict)
}

fn check(candidates: &[Candidate], rel_threshold: f64) -> Consistency {
    let kinds: BTreeSet<RefKind> = candidates.iter().map(|c| c.concept.ref_kind).collect();
    if kinds.len() > 1 {
        return Consistency::ContradictingConstituents;
    }
    if kinds.contains(&RefKind::Single) {
        if candidates
            .iter()
            .any(|c| c.concept.determinate && top_is_tied(&c.concept))
        {
            return Consistency::WithinGroupAmbiguity;
        }
        let tops: BTreeSet<ObjectId> = candidates
            .iter()
            .filter_map(|c| c.concept.ranked().first().map(|p| p.0))
            .collect();
        if tops.len() > 1 {
            return Consistency::ContradictingConstituents;
        }
    } else {
        let groups: BTreeSet<Vec<ObjectId>> = candidates
            .iter()
            .map(|c| referents_group(&c.concept, rel_threshold))
            .collect();
        if groups.len() > 1 {
            return Consistency::ContradictingConstituents;
        }
    }
    Consistency::Consistent
}

fn report(c: &Candidate, rel_threshold: f64) -> CandidateReport {
    CandidateReport {
        span: [c.span.0, c.span.1],
        category: c.category.to_string(),
        ref_kind: c.concept.ref_kind,
        determinate: c.concept.determinate,
        referents: c
            .concept
            .ranked()
            .into_iter()
            .map(|(id, weight)| Referent { id, weight })
            .collect(),
        group: referents_group(&c.concept, rel_threshold),
    }
}

/// Commits to one scene object. Composite picks resolve to their
/// lowest-numbered member, so the result is always removable.
pub fn select_referent(
    candidates: &[Candidate],
    verdict: Consistency,
    seed: u64,
    rel_threshold: f64,
    ctx: &VisionContext,
) -> Resolution {
    let base = |id: ObjectId| ctx.members(id).into_iter().min();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, random) = match verdict {
        Consistency::NoReferent => (None, false),
        Consistency::Consistent => {
            let first = &candidates[0].concept;
            (first.ranked().first().and_then(|&(id, _)| base(id)), false)
        }
        Consistency::WithinGroupAmbiguity => {
            let pool: BTreeSet<ObjectId> = candidates
                .iter()
                .filter(|c| c.concept.determinate)
                .flat_map(|c| tied_top(&c.concept))
                .filter_map(base)
                .collect();
            let pool: Vec<ObjectId> = pool.into_iter().collect();
            (pool.choose(&mut rng).copied(), true)
        }
        Consistency::ContradictingConstituents => {
            let pool: BTreeSet<ObjectId> = candidates
                .iter()
                .flat_map(|c| referents_group(&c.concept, rel_threshold))
                .flat_map(|id| ctx.members(id))
                .collect();
            let pool: Vec<ObjectId> = pool.into_iter().collect();
            (pool.choose(&mut rng).copied(), true)
        }
    };
    let scene = &ctx.frame().scene;
    let chosen = chosen.filter(|id| scene.contains(*id));
    Resolution {
        consistency: if chosen.is_none() {
            Consistency::NoReferent
        } else {
            verdict
        },
        used_random_tiebreak: random && chosen.is_some(),
        chosen,
        seed,
        candidates: candidates.iter().map(|c| report(c, rel_threshold)).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineConfig {
    pub vision: VisionConfig,
    pub rel_threshold: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            vision: VisionConfig::default(),
            rel_threshold: DEFAULT_REL_THRESHOLD,
        }
    }
}

/// A lexicon plus tuning constants; cheap to clone and safe to share.
#[derive(Clone, Debug)]
pub struct Engine {
    lexicon: Arc<Lexicon>,
    pub config: EngineConfig,
}

impl Engine {
    pub fn new(lexicon: Lexicon, config: EngineConfig) -> Self {
        Engine {
            lexicon: Arc::new(lexicon),
            config,
        }
    }

    pub fn packaged() -> Self {
        Engine::new(Lexicon::packaged(), EngineConfig::default())
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn resolve(&self, utterance: &str, state: &SceneState, seed: u64) -> Resolution {
        self.resolve_with_chart(utterance, state, seed).0
    }

    pub fn resolve_with_chart(&self, utterance: &str, state: &SceneState, seed: u64) -> (Resolution, Chart) {
        let scope = Scope {
            current: VisionContext::new(&state.current, self.config.vision),
            previous: state
                .previous
                .as_deref()
                .map(|f| VisionContext::new(f, self.config.vision)),
            last_removed: state.last_removed,
            lexicon: &self.lexicon,
            rel_threshold: self.config.rel_threshold,
        };
        let chart = parse(&tokenize(utterance), &self.lexicon, &scope);
        let (candidates, verdict) = filter_candidates(&chart, self.config.rel_threshold);
        let resolution = select_referent(&candidates, verdict, seed, self.config.rel_threshold, &scope.current);
        (resolution, chart)
    }
}
