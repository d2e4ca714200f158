//! Bottom-up partial chart parsing with composition on rule completion.
//!
//! Every edge carries a [`Meaning`]: the concept it denotes plus the composer
//! chain that a later rule may still apply elsewhere. Unknown words never
//! produce edges; the parser runs over the known tokens and every span is
//! then widened to swallow the unknown tokens that follow it.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::composition::{chain_flush, compose_bridge, compose_group_split, compose_spatial, Concept, RefKind, Scope};
use crate::lexicon::{Category, ComposerSpec, GrammarRule, LexicalEntry, Lexicon, RefBehaviour, Template};

/// Lowercases, keeps internal apostrophes and drops other punctuation.
pub fn tokenize(utterance: &str) -> Vec<String> {
    utterance
        .split_whitespace()
        .filter_map(|raw| {
            let kept: String = raw
                .chars()
                .map(|c| if c == '\u{2019}' { '\'' } else { c })
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(char::to_lowercase)
                .collect();
            let word = kept.trim_matches('\'');
            (!word.is_empty()).then(|| word.to_string())
        })
        .collect()
}

/// Semantic content of an edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Meaning {
    pub concept: Concept,
    /// Pending unary composers, outermost first.
    pub chain: Vec<ComposerSpec>,
    /// Whether the edge may still act as a one-argument functor.
    pub open: bool,
    pub binary: Option<ComposerSpec>,
    /// Length of the leading run of ordering composers in `chain` that were
    /// applied directly to `inner`.
    pub ordering_prefix: usize,
    pub inner: Option<Concept>,
    /// False once a binary composer has contributed: its effect is in
    /// `concept` but not in `chain`, so the chain cannot be replayed.
    pub replayable: bool,
}

impl Meaning {
    fn key(&self) -> String {
        let mut k = self.concept.fingerprint();
        for step in &self.chain {
            let _ = write!(k, "|{}", step.label());
        }
        let _ = write!(
            k,
            "|open={}|rep={}|bin={}|pre={}|",
            self.open,
            self.replayable,
            self.binary.as_ref().map(ComposerSpec::label).unwrap_or_default(),
            self.ordering_prefix
        );
        if let Some(inner) = &self.inner {
            k.push_str(&inner.fingerprint());
        }
        k
    }
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub category: Category,
    /// Token interval `[start, end)` in the original utterance.
    pub start: usize,
    pub end: usize,
    pub meaning: Meaning,
    pub via: String,
    pub children: Vec<usize>,
}

impl Edge {
    pub fn is_referring(&self) -> bool {
        self.meaning.concept.is_referring() && !self.meaning.concept.weights.is_empty()
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug, Default)]
pub struct Chart {
    pub tokens: Vec<String>,
    pub edges: Vec<Edge>,
}

impl Chart {
    /// One line per edge: `span=[i,j) CAT concept={id:weight,…} via RULE`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(
                out,
                "span=[{},{}) {} concept={} via {}",
                e.start,
                e.end,
                e.category,
                e.meaning.concept.display_weights(),
                e.via
            );
        }
        out
    }

    pub fn referring_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.is_referring())
    }
}

fn all_ordering(chain: &[ComposerSpec]) -> bool {
    !chain.is_empty() && chain.iter().all(ComposerSpec::is_ordering)
}

fn ref_kind(r: RefBehaviour) -> Option<RefKind> {
    match r {
        RefBehaviour::None => None,
        RefBehaviour::Single => Some(RefKind::Single),
        RefBehaviour::Group => Some(RefKind::Group),
    }
}

/// Leaf meaning of one lexical entry. Words that refer on their own apply
/// their composer to every visible object.
pub fn leaf_meaning(entry: &LexicalEntry, scope: &Scope) -> Meaning {
    if entry.composer.is_binary() {
        return Meaning {
            concept: Concept::not_referring(),
            chain: Vec::new(),
            open: false,
            binary: Some(entry.composer.clone()),
            ordering_prefix: 0,
            inner: None,
            replayable: true,
        };
    }
    let chain = match entry.composer {
        ComposerSpec::Identity => Vec::new(),
        _ => vec![entry.composer.clone()],
    };
    let default = ref_kind(entry.ref_behaviour).map(|k| scope.all_objects(k));
    let concept = default
        .as_ref()
        .and_then(|d| chain_flush(&chain, d, scope).ok())
        .unwrap_or_else(Concept::not_referring);
    let nominal_ordering = entry.category == Category::N && all_ordering(&chain);
    Meaning {
        inner: if nominal_ordering && concept.is_referring() {
            default
        } else {
            None
        },
        ordering_prefix: if nominal_ordering { chain.len() } else { 0 },
        concept,
        chain,
        open: entry.arity == 1,
        binary: None,
        replayable: true,
    }
}

/// Applies one argument structure to syntactically matched constituents.
/// `None` means the rule does not succeed for this template.
pub fn complete_rule(head: Category, template: &Template, matched: &[&Meaning], scope: &Scope) -> Option<Meaning> {
    let functor = matched.get(template.functor)?;
    let args: Vec<&Meaning> = template
        .args
        .iter()
        .map(|&i| matched.get(i).copied())
        .collect::<Option<_>>()?;
    match args.as_slice() {
        [] => {
            if functor.binary.is_some() && head == Category::NP {
                return None;
            }
            Some((*functor).clone())
        }
        [arg] => apply_unary(functor, arg, scope),
        [first, second] => apply_binary(functor, first, second, scope),
        _ => None,
    }
}

fn apply_unary(f: &Meaning, a: &Meaning, scope: &Scope) -> Option<Meaning> {
    if f.binary.is_some() || !f.open {
        return None;
    }
    if f.chain.is_empty() {
        return Some(a.clone());
    }
    if a.binary.is_some() {
        return None;
    }
    let ordering = all_ordering(&f.chain);
    let p = a.ordering_prefix.min(a.chain.len());
    let referring = a.concept.is_referring();
    if ordering && p > 0 {
        // Stacked ordering words compose in reading order regardless of
        // bracketing: the earlier word is applied first.
        let mut applied: Vec<ComposerSpec> = a.chain[..p].to_vec();
        applied.extend(f.chain.iter().cloned());
        let concept = if referring {
            chain_flush(&applied, a.inner.as_ref()?, scope).ok()?
        } else {
            Concept::not_referring()
        };
        let mut chain = applied.clone();
        chain.extend(a.chain[p..].iter().cloned());
        return Some(Meaning {
            concept,
            chain,
            open: true,
            binary: None,
            ordering_prefix: applied.len(),
            inner: a.inner.clone(),
            replayable: a.replayable,
        });
    }
    let mut chain = f.chain.clone();
    chain.extend(a.chain.iter().cloned());
    if referring {
        let concept = chain_flush(&f.chain, &a.concept, scope).ok()?;
        Some(Meaning {
            concept,
            chain,
            open: true,
            binary: None,
            ordering_prefix: if ordering { f.chain.len() } else { 0 },
            inner: ordering.then(|| a.concept.clone()),
            replayable: a.replayable,
        })
    } else {
        Some(Meaning {
            concept: Concept::not_referring(),
            chain,
            open: true,
            binary: None,
            ordering_prefix: 0,
            inner: None,
            replayable: a.replayable,
        })
    }
}

fn apply_binary(f: &Meaning, first: &Meaning, second: &Meaning, scope: &Scope) -> Option<Meaning> {
    let concept = match f.binary.as_ref()? {
        ComposerSpec::Spatial { direction } => {
            if !first.concept.is_referring() || !second.concept.is_referring() {
                return None;
            }
            compose_spatial(direction, &first.concept, &second.concept, scope).ok()?
        }
        ComposerSpec::Bridge => {
            let contentful = second
                .chain
                .iter()
                .any(|c| !matches!(c, ComposerSpec::Select | ComposerSpec::Identity));
            if !first.concept.is_referring() || first.concept.weights.is_empty() || !second.replayable || !contentful {
                return None;
            }
            compose_bridge(&second.chain, &first.concept, scope).ok()?
        }
        ComposerSpec::GroupSplit => {
            if !first.replayable {
                return None;
            }
            compose_group_split(&first.chain, &second.concept, scope).ok()?
        }
        _ => return None,
    };
    Some(Meaning {
        concept,
        chain: Vec::new(),
        open: false,
        binary: None,
        ordering_prefix: 0,
        inner: None,
        replayable: false,
    })
}

struct Builder<'s, 'a> {
    scope: &'s Scope<'a>,
    /// Original token index of each known token, plus the utterance length.
    positions: Vec<usize>,
    edges: Vec<(usize, usize, Edge)>,
    seen: HashSet<(Category, usize, usize, String)>,
    by_start: HashMap<(usize, Category), Vec<usize>>,
    by_span: HashMap<(usize, usize), Vec<usize>>,
}

impl<'s, 'a> Builder<'s, 'a> {
    fn add(
        &mut self,
        s: usize,
        e: usize,
        category: Category,
        meaning: Meaning,
        via: String,
        children: Vec<usize>,
    ) -> bool {
        if !self.seen.insert((category, s, e, meaning.key())) {
            return false;
        }
        let n_known = self.positions.len() - 1;
        let edge = Edge {
            category,
            start: self.positions[s],
            end: if e == n_known {
                self.positions[n_known]
            } else {
                self.positions[e]
            },
            meaning,
            via,
            children,
        };
        let id = self.edges.len();
        self.edges.push((s, e, edge));
        self.by_start.entry((s, category)).or_default().push(id);
        self.by_span.entry((s, e)).or_default().push(id);
        true
    }

    /// All ways to cover `[s, e)` with the rule's tail, one edge per symbol.
    fn matches(&self, tail: &[Category], s: usize, e: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.extend_match(tail, s, e, &mut stack, &mut out);
        out
    }

    fn extend_match(&self, tail: &[Category], pos: usize, e: usize, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let Some((&cat, rest)) = tail.split_first() else {
            if pos == e {
                out.push(stack.clone());
            }
            return;
        };
        let Some(ids) = self.by_start.get(&(pos, cat)) else {
            return;
        };
        for &id in ids {
            let end = self.edges[id].1;
            let fits = if rest.is_empty() {
                end == e
            } else {
                end + rest.len() <= e
            };
            if fits {
                stack.push(id);
                self.extend_match(rest, end, e, stack, out);
                stack.pop();
            }
        }
    }

    fn complete(&mut self, rule: &GrammarRule, s: usize, e: usize, matched: Vec<usize>) -> bool {
        let mut added = false;
        for template in &rule.templates {
            let meanings: Vec<&Meaning> = matched.iter().map(|&i| &self.edges[i].2.meaning).collect();
            if let Some(m) = complete_rule(rule.head, template, &meanings, self.scope) {
                let via = format!("{} {}", rule.name(), template);
                added |= self.add(s, e, rule.head, m, via, matched.clone());
            }
        }
        added
    }
}

/// Parses a token list; the chart holds every edge that composed successfully.
pub fn parse(tokens: &[String], lexicon: &Lexicon, scope: &Scope) -> Chart {
    let mut positions: Vec<usize> = (0..tokens.len()).filter(|&i| lexicon.is_known(&tokens[i])).collect();
    let n = positions.len();
    positions.push(tokens.len());
    let mut b = Builder {
        scope,
        positions,
        edges: Vec::new(),
        seen: HashSet::new(),
        by_start: HashMap::new(),
        by_span: HashMap::new(),
    };
    let (unary, multi): (Vec<&GrammarRule>, Vec<&GrammarRule>) =
        lexicon.grammar().iter().partition(|r| r.tail.len() == 1);

    for len in 1..=n {
        for s in 0..=n - len {
            let e = s + len;
            if len == 1 {
                for entry in lexicon.lookup(&tokens[b.positions[s]]) {
                    let m = leaf_meaning(entry, scope);
                    b.add(
                        s,
                        e,
                        entry.category,
                        m,
                        format!("LEX {}:{}", entry.word, entry.composer.label()),
                        Vec::new(),
                    );
                }
            } else {
                for rule in &multi {
                    if rule.tail.len() > len {
                        continue;
                    }
                    for matched in b.matches(&rule.tail, s, e) {
                        b.complete(rule, s, e, matched);
                    }
                }
            }
            // Unary rules are closed over the cell until nothing new appears.
            let mut frontier: Vec<usize> = b.by_span.get(&(s, e)).cloned().unwrap_or_default();
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for id in frontier {
                    let cat = b.edges[id].2.category;
                    for rule in unary.iter().filter(|r| r.tail[0] == cat) {
                        let before = b.edges.len();
                        if b.complete(rule, s, e, vec![id]) {
                            next.extend(before..b.edges.len());
                        }
                    }
                }
                frontier = next;
            }
        }
    }
    Chart {
        tokens: tokens.to_vec(),
        edges: b.edges.into_iter().map(|(_, _, e)| e).collect(),
    }
}
