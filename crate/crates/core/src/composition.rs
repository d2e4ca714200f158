//! Concepts and the semantic composers that transform them.
//!
//! A [`Concept`] is a weighted set of candidate referents. Composers read
//! visual features through a [`Scope`], which holds the vision context of the
//! current frame and, after a removal, of the previous one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ComposeError;
use crate::lexicon::{Axis, ColourModel, ComposerSpec, Extreme, Lexicon, DEFAULT_GAMMA};
use crate::scene::ObjectId;
use crate::vision::VisionContext;

/// Relative cut-off used when a concept is turned into a set of referents.
pub const DEFAULT_REL_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefKind {
    NotReferring,
    Single,
    Group,
}

/// Which frame a concept's referents live in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Epoch {
    #[default]
    Current,
    Previous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Concept {
    pub weights: BTreeMap<ObjectId, f64>,
    pub ref_kind: RefKind,
    pub determinate: bool,
    pub epoch: Epoch,
    pub split_groups: bool,
    /// Weights are probability densities, whose natural lower bound is zero
    /// rather than the weakest referent.
    pub density: bool,
}

impl Concept {
    pub fn not_referring() -> Self {
        Concept {
            weights: BTreeMap::new(),
            ref_kind: RefKind::NotReferring,
            determinate: false,
            epoch: Epoch::Current,
            split_groups: false,
            density: false,
        }
    }

    pub fn from_weights(weights: impl IntoIterator<Item = (ObjectId, f64)>, ref_kind: RefKind) -> Self {
        Concept {
            weights: weights.into_iter().collect(),
            ref_kind,
            determinate: false,
            epoch: Epoch::Current,
            split_groups: false,
            density: false,
        }
    }

    pub fn uniform(ids: impl IntoIterator<Item = ObjectId>, ref_kind: RefKind) -> Self {
        Concept::from_weights(ids.into_iter().map(|id| (id, 1.0)), ref_kind)
    }

    pub fn is_referring(&self) -> bool {
        self.ref_kind != RefKind::NotReferring
    }

    /// Referents by decreasing weight, ties by increasing id.
    pub fn ranked(&self) -> Vec<(ObjectId, f64)> {
        let mut v: Vec<(ObjectId, f64)> = self.weights.iter().map(|(k, w)| (*k, *w)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// Stable text identity: ids with weights to nine significant digits plus
    /// the flags.
    pub fn fingerprint(&self) -> String {
        let mut s = format!(
            "{:?}/{}/{:?}/{}/{}:",
            self.ref_kind, self.determinate, self.epoch, self.split_groups, self.density
        );
        for (id, w) in &self.weights {
            let _ = write!(s, "{}={:.8e},", id, w);
        }
        s
    }

    /// `{id:weight,…}` in decreasing weight order.
    pub fn display_weights(&self) -> String {
        let parts: Vec<String> = self.ranked().iter().map(|(id, w)| format!("{id}:{w:.4e}")).collect();
        format!("{{{}}}", parts.join(","))
    }

    fn with_weights(&self, weights: BTreeMap<ObjectId, f64>) -> Concept {
        Concept {
            weights,
            split_groups: false,
            density: false,
            ..self.clone()
        }
    }
}

/// The referent with maximal weight; ties go to the lowest id.
pub fn referents_single(concept: &Concept) -> Result<ObjectId, ComposeError> {
    if !concept.is_referring() {
        return Err(ComposeError::NotReferring);
    }
    concept
        .ranked()
        .first()
        .map(|(id, _)| *id)
        .ok_or(ComposeError::EmptyConcept)
}

/// Referents whose weight reaches `w_min + rel·(w_max − w_min)`, with
/// `w_min` taken as zero for density-valued concepts.
pub fn referents_group(concept: &Concept, rel_threshold: f64) -> Vec<ObjectId> {
    let (min, max) = concept
        .weights
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| {
            (lo.min(w), hi.max(w))
        });
    let min = if concept.density { min.min(0.0) } else { min };
    let cutoff = min + rel_threshold * (max - min);
    concept
        .weights
        .iter()
        .filter(|(_, &w)| w >= cutoff)
        .map(|(id, _)| *id)
        .collect()
}

/// Feature access for composers: the current frame, the previous frame if an
/// object has been removed, and the colour models.
pub struct Scope<'a> {
    pub current: VisionContext<'a>,
    pub previous: Option<VisionContext<'a>>,
    pub last_removed: Option<ObjectId>,
    pub lexicon: &'a Lexicon,
    pub rel_threshold: f64,
}

impl<'a> Scope<'a> {
    pub fn ctx(&self, epoch: Epoch) -> &VisionContext<'a> {
        match (epoch, &self.previous) {
            (Epoch::Previous, Some(prev)) => prev,
            _ => &self.current,
        }
    }

    /// Every visible object of the current frame, uniformly weighted.
    pub fn all_objects(&self, ref_kind: RefKind) -> Concept {
        Concept::uniform(self.current.visible_ids(), ref_kind)
    }

    fn group(&self, concept: &Concept) -> Result<Vec<ObjectId>, ComposeError> {
        if !concept.is_referring() {
            return Err(ComposeError::NotReferring);
        }
        let ids = referents_group(concept, self.rel_threshold);
        if ids.is_empty() {
            return Err(ComposeError::EmptyConcept);
        }
        Ok(ids)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OrderingMode {
    Min(Axis),
    Max(Axis),
    /// Reference point in board units.
    Region([f64; 2]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderingParams {
    pub gamma: f64,
    pub mode: OrderingMode,
}

impl OrderingParams {
    pub fn from_spec(spec: &ComposerSpec) -> Option<Self> {
        match spec {
            ComposerSpec::OrderingExtremum { axis, extreme, gamma } => Some(OrderingParams {
                gamma: gamma.unwrap_or(DEFAULT_GAMMA),
                mode: match extreme {
                    Extreme::Min => OrderingMode::Min(*axis),
                    Extreme::Max => OrderingMode::Max(*axis),
                },
            }),
            ComposerSpec::OrderingRegion { point, gamma } => Some(OrderingParams {
                gamma: gamma.unwrap_or(DEFAULT_GAMMA),
                mode: OrderingMode::Region(point.board()?),
            }),
            _ => None,
        }
    }
}

/// Weights each referent by the colour density at its average RGB.
pub fn compose_colour(model: &ColourModel, arg: &Concept, scope: &Scope) -> Result<Concept, ComposeError> {
    let ctx = scope.ctx(arg.epoch);
    let weights = scope
        .group(arg)?
        .into_iter()
        .map(|id| Ok((id, model.pdf(ctx.average_rgb(id)?))))
        .collect::<Result<_, ComposeError>>()?;
    Ok(Concept {
        density: true,
        ..arg.with_weights(weights)
    })
}

/// Exponential fall-off along an ordering of the referents.
pub fn compose_ordering(params: &OrderingParams, arg: &Concept, scope: &Scope) -> Result<Concept, ComposeError> {
    let ctx = scope.ctx(arg.epoch);
    let ids = scope.group(arg)?;
    let width = f64::from(ctx.raster().width);
    let height = f64::from(ctx.raster().height);
    let mut feats: Vec<(ObjectId, f64)> = ids
        .into_iter()
        .map(|id| {
            let c = ctx.centroid(id)?;
            let f = match params.mode {
                OrderingMode::Min(Axis::X) | OrderingMode::Max(Axis::X) => c[0],
                OrderingMode::Min(Axis::Y) | OrderingMode::Max(Axis::Y) => c[1],
                OrderingMode::Region([px, py]) => ((c[0] - px * width).powi(2) + (c[1] - py * height).powi(2)).sqrt(),
            };
            Ok((id, f))
        })
        .collect::<Result<_, ComposeError>>()?;
    let g = params.gamma;
    let (lo, hi) = feats
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, f)| {
            (a.min(f), b.max(f))
        });
    let norm = |f: f64| if hi > lo { (f - lo) / (hi - lo) } else { 0.0 };
    let weights: BTreeMap<ObjectId, f64> = match params.mode {
        OrderingMode::Region(_) => feats
            .iter()
            .map(|&(id, d)| {
                let ratio = if hi > 0.0 && feats.len() > 1 { d / hi } else { 0.0 };
                (id, g.powf(1.0 + ratio))
            })
            .collect(),
        OrderingMode::Min(_) => {
            feats.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            feats
                .iter()
                .enumerate()
                .map(|(i, &(id, f))| (id, g.powf(i as f64 * (1.0 + norm(f)))))
                .collect()
        }
        OrderingMode::Max(_) => {
            feats.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            feats
                .iter()
                .enumerate()
                .map(|(j, &(id, f))| (id, g.powf(j as f64 * (2.0 - norm(f)))))
                .collect()
        }
    };
    Ok(arg.with_weights(weights))
}

/// Single-linkage groups among the referents, each turned into a convex-hull
/// composite weighted by `exp(−cohesion / threshold)`.
pub fn compose_grouping(count: Option<usize>, arg: &Concept, scope: &Scope) -> Result<Concept, ComposeError> {
    let ctx = scope.ctx(arg.epoch);
    let bases: Vec<ObjectId> = scope
        .group(arg)?
        .into_iter()
        .filter(|id| ctx.composite(*id).is_none())
        .collect();
    if bases.len() < 2 {
        return Err(ComposeError::NoGroups);
    }
    let threshold = ctx.config.group_distance_threshold;
    let mut weights = BTreeMap::new();
    for group in ctx.find_groups(&bases, count).groups {
        let composite = ctx.make_composite(&group.members)?;
        weights.insert(composite.id, (-group.cohesion / threshold).exp());
    }
    if weights.is_empty() {
        return Err(ComposeError::NoGroups);
    }
    Ok(Concept {
        weights,
        ref_kind: RefKind::Group,
        determinate: arg.determinate,
        epoch: arg.epoch,
        split_groups: false,
        density: false,
    })
}

/// Targets scored by their best landmark. Features come from the previous
/// frame when either side is anaphoric.
pub fn compose_spatial(
    direction: &str,
    target: &Concept,
    landmark: &Concept,
    scope: &Scope,
) -> Result<Concept, ComposeError> {
    let epoch = if landmark.epoch == Epoch::Previous || target.epoch == Epoch::Previous {
        Epoch::Previous
    } else {
        Epoch::Current
    };
    let ctx = scope.ctx(epoch);
    let landmarks = scope.group(landmark)?;
    let excluded: BTreeSet<ObjectId> = landmarks
        .iter()
        .flat_map(|&l| scope.ctx(landmark.epoch).members(l).into_iter().chain([l]))
        .collect();
    let targets: Vec<ObjectId> = scope
        .group(target)?
        .into_iter()
        .filter(|t| !excluded.contains(t))
        .collect();
    if targets.is_empty() {
        return Err(ComposeError::NoTargets);
    }
    let mut weights = BTreeMap::new();
    for &t in &targets {
        let best = landmarks
            .iter()
            .filter_map(|&l| ctx.spatial_score(t, l, direction).ok())
            .fold(0.0f64, f64::max);
        if best > 0.0 {
            weights.insert(t, best);
        }
    }
    if weights.is_empty() {
        return Err(ComposeError::NoTargets);
    }
    Ok(Concept {
        weights,
        ref_kind: RefKind::Single,
        determinate: target.determinate,
        epoch: Epoch::Current,
        split_groups: false,
        density: false,
    })
}

/// The object removed last, in the previous frame.
pub fn compose_anaphora(last_removed: Option<ObjectId>) -> Result<Concept, ComposeError> {
    let id = last_removed.ok_or(ComposeError::AnaphoraUnavailable)?;
    Ok(Concept {
        weights: BTreeMap::from([(id, 1.0)]),
        ref_kind: RefKind::Single,
        determinate: true,
        epoch: Epoch::Previous,
        split_groups: false,
        density: false,
    })
}

pub fn compose_select(arg: &Concept) -> Concept {
    Concept {
        determinate: true,
        ..arg.clone()
    }
}

/// Replaces the best composite by its members, uniformly weighted. Concepts
/// without composites only lose the flag.
pub fn split_group(concept: &Concept, ctx: &VisionContext) -> Concept {
    let best = concept.ranked().into_iter().find_map(|(id, _)| ctx.composite(id));
    let mut out = concept.clone();
    out.split_groups = false;
    if let Some(composite) = best {
        out.weights = composite.members.iter().map(|&m| (m, 1.0)).collect();
        out.ref_kind = RefKind::Single;
    }
    out
}

/// Applies one unary composer. A pending split flag is consumed first.
pub fn apply(spec: &ComposerSpec, arg: &Concept, scope: &Scope) -> Result<Concept, ComposeError> {
    let split;
    let arg = if arg.split_groups {
        split = split_group(arg, scope.ctx(arg.epoch));
        &split
    } else {
        arg
    };
    match spec {
        ComposerSpec::ColourProbabilistic { model } => {
            let model = scope
                .lexicon
                .colour_model(model)
                .ok_or_else(|| ComposeError::UnknownModel(model.clone()))?;
            compose_colour(model, arg, scope)
        }
        ComposerSpec::OrderingExtremum { .. } | ComposerSpec::OrderingRegion { .. } => {
            let params = OrderingParams::from_spec(spec).expect("validated ordering spec");
            compose_ordering(&params, arg, scope)
        }
        ComposerSpec::Grouping { count } => compose_grouping(*count, arg, scope),
        ComposerSpec::Anaphoric => compose_anaphora(scope.last_removed),
        ComposerSpec::Select => {
            if !arg.is_referring() {
                return Err(ComposeError::NotReferring);
            }
            Ok(compose_select(arg))
        }
        ComposerSpec::Identity => Ok(arg.clone()),
        ComposerSpec::Spatial { .. } | ComposerSpec::Bridge | ComposerSpec::GroupSplit => {
            Err(ComposeError::Arity { expected: 2, got: 1 })
        }
    }
}

/// Runs a queued chain on `arg`: `[A, B]` yields `A(B(arg))`.
pub fn chain_flush(chain: &[ComposerSpec], arg: &Concept, scope: &Scope) -> Result<Concept, ComposeError> {
    chain
        .iter()
        .rev()
        .try_fold(arg.clone(), |c, spec| apply(spec, &c, scope))
}

/// Applies the first constituent's pending chain to the second's concept.
pub fn compose_bridge(chain: &[ComposerSpec], second: &Concept, scope: &Scope) -> Result<Concept, ComposeError> {
    if chain.is_empty() {
        return Err(ComposeError::NothingToBridge);
    }
    if !second.is_referring() || second.weights.is_empty() {
        return Err(ComposeError::EmptyConcept);
    }
    chain_flush(chain, second, scope)
}

/// Like [`compose_bridge`], but the argument carries the split flag; a flag
/// that no composer consumed is applied at the end.
pub fn compose_group_split(chain: &[ComposerSpec], second: &Concept, scope: &Scope) -> Result<Concept, ComposeError> {
    if !second.is_referring() || second.weights.is_empty() {
        return Err(ComposeError::EmptyConcept);
    }
    let flagged = Concept {
        split_groups: true,
        ..second.clone()
    };
    let out = chain_flush(chain, &flagged, scope)?;
    Ok(if out.split_groups {
        split_group(&out, scope.ctx(out.epoch))
    } else {
        out
    })
}
