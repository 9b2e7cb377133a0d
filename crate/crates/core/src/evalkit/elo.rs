//! Sequential pairwise ELO ratings.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::Record;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EloConfig {
    pub k: f64,
    pub scale: f64,
    pub base: f64,
    pub init_rating: f64,
}

impl Default for EloConfig {
    fn default() -> Self {
        Self { k: 4.0, scale: 400.0, base: 10.0, init_rating: 1000.0 }
    }
}

impl EloConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let ok = [self.k, self.scale, self.base, self.init_rating].iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(EvalError::Config("ELO parameters must be finite and positive".into()))
        }
    }
}

/// A vote: model A wins, model B wins, or a tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Winner {
    A,
    B,
    Tie,
}

impl Winner {
    pub fn as_str(self) -> &'static str {
        match self {
            Winner::A => "choice_A",
            Winner::B => "choice_B",
            Winner::Tie => "choice_C",
        }
    }

    pub fn parse(s: &str) -> Result<Self, EvalError> {
        match s {
            "choice_A" => Ok(Winner::A),
            "choice_B" => Ok(Winner::B),
            "choice_C" => Ok(Winner::Tie),
            other => Err(EvalError::UnexpectedVote(other.to_string())),
        }
    }

    /// Actual score of model A.
    pub fn score_a(self) -> f64 {
        match self {
            Winner::A => 1.0,
            Winner::B => 0.0,
            Winner::Tie => 0.5,
        }
    }
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl TryFrom<String> for Winner {
    type Error = EvalError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Winner::parse(&s)
    }
}

impl From<Winner> for String {
    fn from(w: Winner) -> String {
        w.as_str().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub match_id: String,
    pub model_a: String,
    pub model_b: String,
    pub winner: Winner,
}

impl Record for VoteRecord {
    fn id(&self) -> &str {
        &self.match_id
    }

    fn validate(&self, _: &std::path::Path) -> Result<(), String> {
        if self.model_a == self.model_b {
            return Err(format!("model_a and model_b are both {}", self.model_a));
        }
        Ok(())
    }
}

/// Ratings keyed by model name; unseen models read as the initial rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloTable {
    pub init_rating: f64,
    pub ratings: BTreeMap<String, f64>,
}

impl EloTable {
    pub fn new(cfg: &EloConfig) -> Self {
        Self { init_rating: cfg.init_rating, ratings: BTreeMap::new() }
    }

    pub fn rating(&self, model: &str) -> f64 {
        self.ratings.get(model).copied().unwrap_or(self.init_rating)
    }

    pub fn sum(&self) -> f64 {
        self.ratings.values().sum()
    }

    /// Models by descending rating, ties by name.
    pub fn ranking(&self) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self.ratings.iter().map(|(k, r)| (k.clone(), *r)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }
}

/// Applies one vote in place.
pub fn elo_update(table: &mut EloTable, vote: &VoteRecord, cfg: &EloConfig) -> Result<(), EvalError> {
    if vote.model_a == vote.model_b {
        return Err(EvalError::SameModel(vote.model_a.clone()));
    }
    let ra = table.rating(&vote.model_a);
    let rb = table.rating(&vote.model_b);
    let ea = 1.0 / (1.0 + cfg.base.powf((rb - ra) / cfg.scale));
    let eb = 1.0 / (1.0 + cfg.base.powf((ra - rb) / cfg.scale));
    let sa = vote.winner.score_a();
    table.ratings.insert(vote.model_a.clone(), ra + cfg.k * (sa - ea));
    table.ratings.insert(vote.model_b.clone(), rb + cfg.k * (1.0 - sa - eb));
    Ok(())
}

/// Left fold of [`elo_update`] in log order.
pub fn elo_run(votes: &[VoteRecord], cfg: &EloConfig) -> Result<EloTable, EvalError> {
    cfg.validate()?;
    let mut table = EloTable::new(cfg);
    for v in votes {
        elo_update(&mut table, v, cfg)?;
    }
    Ok(table)
}
