//! Per-user file preferences (Zipf over a per-user random permutation of the
//! library), per-F-AP content popularity, and request sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::topology::UserLayout;
use crate::{Error, Result};

/// 1-based file id; 0 is reserved for "empty cache slot".
pub type FileId = u32;

/// How per-user preferences aggregate into per-F-AP popularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularityAggregation {
    /// Mean over served users; keeps the vector a probability distribution.
    Mean,
    /// Plain sum over served users (scales everything by the user count).
    Sum,
}

/// Per-user preference state: one rank permutation per user plus the shared
/// Zipf skewness.
#[derive(Clone, Debug)]
pub struct PreferenceProfile {
    /// `ranks[u][f-1]` is the permuted rank of file `f` for user `u`, in `1..=F`.
    ranks: Vec<Vec<u32>>,
    skewness: f64,
    library_size: usize,
    /// Precomputed `sum_{i=1..F} i^-tau`.
    denom: f64,
}

impl PreferenceProfile {
    pub fn new(
        n_users: usize,
        library_size: usize,
        skewness: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if library_size == 0 {
            return Err(Error::Config("library_size must be at least 1".into()));
        }
        if !(skewness > 0.0) {
            return Err(Error::Config("skewness must be positive".into()));
        }
        let mut profile = Self {
            ranks: Vec::new(),
            skewness,
            library_size,
            denom: zipf_denominator(library_size, skewness),
        };
        profile.ranks = (0..n_users).map(|_| profile.draw_permutation(rng)).collect();
        Ok(profile)
    }

    fn draw_permutation(&self, rng: &mut impl Rng) -> Vec<u32> {
        let mut ranks: Vec<u32> = (1..=self.library_size as u32).collect();
        ranks.shuffle(rng);
        ranks
    }

    pub fn n_users(&self) -> usize {
        self.ranks.len()
    }

    pub fn library_size(&self) -> usize {
        self.library_size
    }

    pub fn skewness(&self) -> f64 {
        self.skewness
    }

    /// Permuted rank of `file` for `user`.
    pub fn rank(&self, user: usize, file: FileId) -> Result<u32> {
        if file == 0 || file as usize > self.library_size {
            return Err(Error::Domain(format!(
                "file {file} outside library 1..={}",
                self.library_size
            )));
        }
        Ok(self.ranks[user][file as usize - 1])
    }
}

fn zipf_denominator(library_size: usize, skewness: f64) -> f64 {
    (1..=library_size).map(|i| (i as f64).powf(-skewness)).sum()
}

/// Probability that `user` requests `file`: `rank^-tau / sum_i i^-tau`.
pub fn user_preference(profile: &PreferenceProfile, user: usize, file: FileId) -> Result<f64> {
    let rank = profile.rank(user, file)? as f64;
    Ok(rank.powf(-profile.skewness) / profile.denom)
}

/// Per-F-AP content popularity over the library.
#[derive(Clone, Debug, PartialEq)]
pub struct PopularityVector {
    probs: Vec<f64>,
}

impl PopularityVector {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability (or weight, in sum aggregation) of `file`.
    pub fn prob(&self, file: FileId) -> f64 {
        self.probs[file as usize - 1]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Aggregates the preferences of the users served by `fap` into one
/// popularity vector.
pub fn fap_popularity(
    profile: &PreferenceProfile,
    layout: &UserLayout,
    fap: usize,
    aggregation: PopularityAggregation,
) -> Result<PopularityVector> {
    let served = layout.users_per_fap;
    if served == 0 {
        return Err(Error::EmptyRegion(format!("F-AP {fap} serves no users")));
    }
    let first_user = fap * served;
    let mut probs = vec![0.0; profile.library_size()];
    for k in 0..served {
        let user = first_user + k;
        for f in 1..=profile.library_size() as u32 {
            probs[f as usize - 1] += user_preference(profile, user, f)?;
        }
    }
    if aggregation == PopularityAggregation::Mean {
        for p in &mut probs {
            *p /= served as f64;
        }
    }
    Ok(PopularityVector::from_probs(probs))
}

/// Samples a file id proportionally to the popularity weights.
pub fn sample_request(popularity: &PopularityVector, rng: &mut impl Rng) -> FileId {
    let total = popularity.total();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in popularity.probs().iter().enumerate() {
        u -= p;
        if u < 0.0 {
            return (i + 1) as FileId;
        }
    }
    popularity.len() as FileId
}

/// Advances preferences to the next slot: a no-op when `consistent`, fresh
/// uniform permutations per user otherwise.
pub fn advance_preferences(profile: &mut PreferenceProfile, consistent: bool, rng: &mut impl Rng) {
    if consistent {
        return;
    }
    for u in 0..profile.ranks.len() {
        profile.ranks[u] = profile.draw_permutation(rng);
    }
}
