//! Five-day training schedule and group assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forcefield::FieldMode;

pub const DAYS: u8 = 5;
pub const TRIALS_PER_DAY: u8 = 20;
pub const BASELINE_TRIALS: u8 = 5;

/// Analysis block a trial belongs to. Day 1 splits into the null-field
/// baseline and the first training block; day 5 is the null-field evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Baseline,
    Training1,
    Training2,
    Training3,
    Training4,
    Final,
}

impl Block {
    pub const ALL: [Block; 6] = [
        Block::Baseline,
        Block::Training1,
        Block::Training2,
        Block::Training3,
        Block::Training4,
        Block::Final,
    ];

    pub fn of(day: u8, trial: u8) -> Block {
        match (day, trial) {
            (1, t) if t <= BASELINE_TRIALS => Block::Baseline,
            (1, _) => Block::Training1,
            (2, _) => Block::Training2,
            (3, _) => Block::Training3,
            (4, _) => Block::Training4,
            _ => Block::Final,
        }
    }

    pub fn is_training(self) -> bool {
        !matches!(self, Block::Baseline | Block::Final)
    }

    pub fn label(self) -> &'static str {
        match self {
            Block::Baseline => "baseline",
            Block::Training1 => "day1",
            Block::Training2 => "day2",
            Block::Training3 => "day3",
            Block::Training4 => "day4",
            Block::Final => "final",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedTrial {
    /// 1-based within the day.
    pub index: u8,
    pub field: FieldMode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayPlan {
    /// 1-based.
    pub day: u8,
    pub trials: Vec<PlannedTrial>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub subject: String,
    pub group: FieldMode,
    pub days: Vec<DayPlan>,
}

impl SessionPlan {
    pub fn total_trials(&self) -> usize {
        self.days.iter().map(|d| d.trials.len()).sum()
    }

    /// `(day, trial)` pairs in execution order.
    pub fn iter(&self) -> impl Iterator<Item = (u8, PlannedTrial)> + '_ {
        self.days.iter().flat_map(|d| d.trials.iter().map(move |t| (d.day, *t)))
    }

    /// Checks the day structure: day 1 is 5 null then 15 assigned trials,
    /// days 2–4 are 20 assigned, day 5 is 20 null.
    pub fn validate(&self) -> Result<(), String> {
        if self.days.len() != DAYS as usize {
            return Err(format!("{} days planned, expected {DAYS}", self.days.len()));
        }
        for (i, day) in self.days.iter().enumerate() {
            let d = i as u8 + 1;
            if day.day != d {
                return Err(format!("day {} out of order at position {i}", day.day));
            }
            if day.trials.len() != TRIALS_PER_DAY as usize {
                return Err(format!("day {d} has {} trials", day.trials.len()));
            }
            for (j, t) in day.trials.iter().enumerate() {
                if t.index as usize != j + 1 {
                    return Err(format!("day {d} trial index {} at position {j}", t.index));
                }
                let expected = match Block::of(d, t.index) {
                    Block::Baseline | Block::Final => FieldMode::Null,
                    _ => self.group,
                };
                if t.field != expected {
                    return Err(format!("day {d} trial {}: {} field, expected {}", t.index, t.field, expected));
                }
            }
        }
        Ok(())
    }
}

pub fn build_session_plan(subject: &str, group: FieldMode) -> SessionPlan {
    let days = (1..=DAYS)
        .map(|day| DayPlan {
            day,
            trials: (1..=TRIALS_PER_DAY)
                .map(|index| PlannedTrial {
                    index,
                    field: match Block::of(day, index) {
                        Block::Baseline | Block::Final => FieldMode::Null,
                        _ => group,
                    },
                })
                .collect(),
        })
        .collect();
    SessionPlan { subject: subject.to_string(), group, days }
}

/// Balanced block randomization: each consecutive block of `groups.len()`
/// subjects receives one of every group in shuffled order.
pub fn pseudo_randomize_into(ids: &[String], groups: &[FieldMode], seed: u64) -> Vec<(String, FieldMode)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(ids.len());
    for chunk in ids.chunks(groups.len()) {
        let mut block = groups.to_vec();
        block.shuffle(&mut rng);
        out.extend(chunk.iter().cloned().zip(block));
    }
    out
}

/// Balanced assignment to the convergent, divergent and null groups.
pub fn pseudo_randomize(ids: &[String], seed: u64) -> Vec<(String, FieldMode)> {
    pseudo_randomize_into(ids, &FieldMode::ALL, seed)
}
