//! Text-to-garment matching: unit embeddings, cosine match scores, exhaustive
//! best-match retrieval and the threshold routing rule.
//!
//! Routing sends a full outfit change to the image-based generator when the
//! best catalog garment scores at least `tau`, and to the text-based
//! generator otherwise. The boundary is inclusive.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Category};
use crate::invocation::ItemKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("cannot normalize a zero-length or zero-norm vector")]
    ZeroVector,
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no catalog garments match the requested item")]
    EmptyCatalog,
    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("k must be at least 1")]
    ZeroK,
}

/// Unit-L2-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Embedding {
    values: Vec<f32>,
}

/// Largest L2-norm deviation from 1 accepted for a stored embedding.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

impl Embedding {
    /// Wraps values already known to be unit-norm, checking within
    /// [`UNIT_NORM_TOLERANCE`].
    pub fn from_unit(values: Vec<f32>) -> Result<Self, MatchError> {
        if values.is_empty() {
            return Err(MatchError::ZeroVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MatchError::NonFinite);
        }
        let norm = l2(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(MatchError::ZeroVector);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        l2(&self.values)
    }
}

fn l2(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

/// Scales `raw` to unit length.
pub fn normalize(raw: &[f32]) -> Result<Embedding, MatchError> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(MatchError::NonFinite);
    }
    let norm = l2(raw);
    if raw.is_empty() || norm == 0.0 {
        return Err(MatchError::ZeroVector);
    }
    Ok(Embedding {
        values: raw.iter().map(|&v| (f64::from(v) / norm) as f32).collect(),
    })
}

/// Cosine similarity in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatchScore(f64);

impl MatchScore {
    /// Clamps to [-1, 1]; rounding can push a dot product of unit vectors
    /// marginally outside.
    pub fn new(value: f64) -> Self {
        Self(value.clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for MatchScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<MatchScore, MatchError> {
    if a.dim() != b.dim() {
        return Err(MatchError::DimensionMismatch(a.dim(), b.dim()));
    }
    // f32 * f32 is exact in f64, so the sum is symmetric bit-for-bit.
    let dot: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    Ok(MatchScore::new(dot))
}

/// Routing threshold `tau`, validated to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub const DEFAULT_LIVE: f64 = 0.25;
    pub const DEFAULT_MOCK: f64 = 0.50;

    pub fn new(value: f64) -> Result<Self, MatchError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(MatchError::ThresholdOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Threshold {
    type Error = MatchError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Threshold::new(value)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    ImageBased,
    TextBased,
}

/// Image-based exactly when `score >= tau`.
pub fn route(score: MatchScore, tau: Threshold) -> Branch {
    if score.value() >= tau.value() {
        Branch::ImageBased
    } else {
        Branch::TextBased
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestMatch {
    pub garment_id: String,
    pub score: MatchScore,
}

/// The routing decision with its evidence, as recorded in traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "branch", rename_all = "snake_case")]
pub enum Route {
    ImageBased {
        garment_id: String,
        score: MatchScore,
    },
    /// `score` is absent when no catalog garment was eligible.
    TextBased { score: Option<MatchScore> },
}

impl Route {
    pub fn decide(best: Option<BestMatch>, tau: Threshold) -> Route {
        match best {
            Some(m) if route(m.score, tau) == Branch::ImageBased => Route::ImageBased {
                garment_id: m.garment_id,
                score: m.score,
            },
            Some(m) => Route::TextBased {
                score: Some(m.score),
            },
            None => Route::TextBased { score: None },
        }
    }

    pub fn branch(&self) -> Branch {
        match self {
            Route::ImageBased { .. } => Branch::ImageBased,
            Route::TextBased { .. } => Branch::TextBased,
        }
    }

    pub fn score(&self) -> Option<MatchScore> {
        match self {
            Route::ImageBased { score, .. } => Some(*score),
            Route::TextBased { score } => *score,
        }
    }
}

/// Descending score, then ascending id.
fn rank(a: &(String, MatchScore), b: &(String, MatchScore)) -> Ordering {
    b.1 .0.total_cmp(&a.1 .0).then_with(|| a.0.cmp(&b.0))
}

fn category_filter(item: ItemKind) -> Option<Category> {
    Category::for_item(item)
}

fn scored<'a>(
    query: &'a Embedding,
    catalog: &'a Catalog,
    item_filter: ItemKind,
) -> impl Iterator<Item = Result<(&'a str, MatchScore), MatchError>> + 'a {
    let wanted = category_filter(item_filter);
    catalog
        .records()
        .iter()
        .filter(move |r| wanted.is_none_or(|c| r.category == c))
        .map(move |r| cosine_similarity(query, &r.embedding).map(|s| (r.garment_id.as_str(), s)))
}

/// Highest-scoring garment among those matching `item_filter`
/// (`Unspecified` admits every category). Ties go to the smallest id.
pub fn best_match(
    query: &Embedding,
    catalog: &Catalog,
    item_filter: ItemKind,
) -> Result<BestMatch, MatchError> {
    let mut best: Option<(&str, MatchScore)> = None;
    for candidate in scored(query, catalog, item_filter) {
        let (id, score) = candidate?;
        let better = match best {
            None => true,
            Some((bid, bs)) => score.0 > bs.0 || (score.0 == bs.0 && id < bid),
        };
        if better {
            best = Some((id, score));
        }
    }
    best.map(|(id, score)| BestMatch {
        garment_id: id.to_owned(),
        score,
    })
    .ok_or(MatchError::EmptyCatalog)
}

/// The `k` best garments, clamped to the eligible catalog size.
pub fn top_k(
    query: &Embedding,
    catalog: &Catalog,
    k: usize,
    item_filter: ItemKind,
) -> Result<Vec<(String, MatchScore)>, MatchError> {
    if k == 0 {
        return Err(MatchError::ZeroK);
    }
    let mut all = scored(query, catalog, item_filter)
        .map(|r| r.map(|(id, s)| (id.to_owned(), s)))
        .collect::<Result<Vec<_>, _>>()?;
    if all.is_empty() {
        return Err(MatchError::EmptyCatalog);
    }
    all.sort_by(rank);
    all.truncate(k);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::GarmentRecord;
    use proptest::prelude::*;

    fn record(id: &str, category: Category, raw: &[f32]) -> GarmentRecord {
        GarmentRecord {
            garment_id: id.into(),
            category,
            caption: id.into(),
            image_path: format!("images/{id}.png"),
            embedding: normalize(raw).unwrap(),
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[3.0, 4.0]).unwrap().values(), &[0.6, 0.8]);
        assert_eq!(
            normalize(&[1.0, 0.0, 0.0]).unwrap().values(),
            &[1.0, 0.0, 0.0]
        );
        assert_eq!(normalize(&[0.0, 0.0]), Err(MatchError::ZeroVector));
        assert_eq!(normalize(&[]), Err(MatchError::ZeroVector));
        assert_eq!(normalize(&[f32::NAN, 1.0]), Err(MatchError::NonFinite));
    }

    #[test]
    fn cosine_examples() {
        let u = normalize(&[0.3, -1.2, 4.0]).unwrap();
        assert!((cosine_similarity(&u, &u).unwrap().value() - 1.0).abs() < 1e-6);
        let x = normalize(&[1.0, 0.0]).unwrap();
        let y = normalize(&[0.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&x, &y).unwrap().value(), 0.0);
        // Longhand: 32 / (sqrt(14) * sqrt(77)) = 0.9746318461970762.
        let a = normalize(&[1.0, 2.0, 3.0]).unwrap();
        let b = normalize(&[4.0, 5.0, 6.0]).unwrap();
        let s = cosine_similarity(&a, &b).unwrap().value();
        assert!((s - 0.974632).abs() < 1e-6, "{s}");
        assert!(matches!(
            cosine_similarity(&a, &x),
            Err(MatchError::DimensionMismatch(3, 2))
        ));
    }

    #[test]
    fn best_match_exact_member_and_tie_break() {
        let c = Catalog::new(vec![
            record("g1", Category::Top, &[1.0, 0.0]),
            record("g2", Category::Top, &[0.0, 1.0]),
        ])
        .unwrap();
        let q = normalize(&[1.0, 0.0]).unwrap();
        let m = best_match(&q, &c, ItemKind::UpperBody).unwrap();
        assert_eq!((m.garment_id.as_str(), m.score.value()), ("g1", 1.0));

        let tie = Catalog::new(vec![
            record("g2", Category::Top, &[1.0, 0.0]),
            record("g1", Category::Top, &[1.0, 0.0]),
        ])
        .unwrap();
        assert_eq!(
            best_match(&q, &tie, ItemKind::UpperBody)
                .unwrap()
                .garment_id,
            "g1"
        );
    }

    #[test]
    fn item_filter_restricts_categories() {
        let c = Catalog::new(vec![
            record("top", Category::Top, &[1.0, 0.0]),
            record("dress", Category::Dress, &[0.6, 0.8]),
        ])
        .unwrap();
        let q = normalize(&[1.0, 0.0]).unwrap();
        assert_eq!(
            best_match(&q, &c, ItemKind::FullBody).unwrap().garment_id,
            "dress"
        );
        assert_eq!(
            best_match(&q, &c, ItemKind::Unspecified)
                .unwrap()
                .garment_id,
            "top"
        );
        assert_eq!(
            best_match(&q, &c, ItemKind::LowerBody),
            Err(MatchError::EmptyCatalog)
        );
    }

    #[test]
    fn route_examples() {
        let tau = Threshold::new(0.25).unwrap();
        assert_eq!(route(MatchScore::new(0.90), tau), Branch::ImageBased);
        assert_eq!(route(MatchScore::new(0.10), tau), Branch::TextBased);
        assert_eq!(route(MatchScore::new(0.25), tau), Branch::ImageBased);
        assert!(Threshold::new(1.5).is_err());
        assert!(Threshold::new(-0.1).is_err());
    }

    #[test]
    fn route_decide_carries_evidence() {
        let tau = Threshold::new(0.5).unwrap();
        let hit = BestMatch {
            garment_id: "g".into(),
            score: MatchScore::new(0.5),
        };
        assert_eq!(
            Route::decide(Some(hit.clone()), tau),
            Route::ImageBased {
                garment_id: "g".into(),
                score: MatchScore::new(0.5)
            }
        );
        let miss = BestMatch {
            score: MatchScore::new(0.49),
            ..hit
        };
        assert_eq!(
            Route::decide(Some(miss), tau),
            Route::TextBased {
                score: Some(MatchScore::new(0.49))
            }
        );
        assert_eq!(Route::decide(None, tau), Route::TextBased { score: None });
    }

    #[test]
    fn top_k_clamps_and_sorts() {
        let c = Catalog::new(vec![
            record("a", Category::Top, &[1.0, 0.0]),
            record("b", Category::Top, &[0.0, 1.0]),
            record("c", Category::Top, &[1.0, 1.0]),
        ])
        .unwrap();
        let q = normalize(&[1.0, 0.2]).unwrap();
        let ranked = top_k(&q, &c, 10, ItemKind::Unspecified).unwrap();
        let ids: Vec<_> = ranked.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
        assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(
            top_k(&q, &c, 0, ItemKind::Unspecified),
            Err(MatchError::ZeroK)
        );
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-1.0f32..1.0, dim)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn routing_law(score in -1.0f64..=1.0, tau in 0.0f64..=1.0) {
            let t = Threshold::new(tau).unwrap();
            let b = route(MatchScore::new(score), t);
            prop_assert_eq!(b == Branch::ImageBased, score >= tau);
            prop_assert_eq!(route(MatchScore::new(tau), t), Branch::ImageBased);
        }

        #[test]
        fn cosine_is_symmetric(a in vec_strategy(8), b in vec_strategy(8)) {
            let (a, b) = (normalize(&a).unwrap(), normalize(&b).unwrap());
            prop_assert_eq!(cosine_similarity(&a, &b).unwrap(), cosine_similarity(&b, &a).unwrap());
        }

        #[test]
        fn normalized_vectors_are_unit(a in vec_strategy(16)) {
            prop_assert!((normalize(&a).unwrap().norm() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn argmax_is_scale_invariant(raw in prop::collection::vec(vec_strategy(6), 1..20),
                                     scale in 0.01f32..100.0,
                                     q in vec_strategy(6)) {
            let build = |s: f32| Catalog::new(raw.iter().enumerate().map(|(i, v)| {
                let scaled: Vec<f32> = v.iter().map(|x| x * s).collect();
                record(&format!("g{i:03}"), Category::Top, &scaled)
            }).collect()).unwrap();
            let q = normalize(&q).unwrap();
            let a = best_match(&q, &build(1.0), ItemKind::Unspecified).unwrap();
            let b = best_match(&q, &build(scale), ItemKind::Unspecified).unwrap();
            // Rescaling perturbs the normalized f32 values by at most an ulp;
            // only a near-tie can legitimately flip the winner.
            if a.garment_id != b.garment_id {
                prop_assert!((a.score.value() - b.score.value()).abs() < 1e-6);
            }
        }
    }
}
