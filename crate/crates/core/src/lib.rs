//! Grounded resolution of referring expressions over synthetic cone scenes.
//!
//! The pipeline is: render a [`scene::Scene`] to a raster, extract visual
//! features ([`vision`]), parse the utterance bottom-up with a small grammar
//! ([`parser`]) while word meanings ([`lexicon`]) compose weighted referent
//! sets ([`composition`]), and finally filter the longest referring parses
//! down to one object ([`resolution`]).

pub mod composition;
pub mod error;
pub mod harness;
pub mod lexicon;
pub mod par;
pub mod parser;
pub mod resolution;
pub mod scene;
pub mod vision;
