//! Sorted groups of an evaluation fold by proxy score.
//!
//! Group 1 holds the highest scores. Cutoffs follow the quantile definition
//! `ĉ_k = inf{c : #{S > c} <= m k / K}`, with sentinels `ĉ_0 = +∞` and
//! `ĉ_K = -∞`. Group membership itself is rank based, ties broken by
//! ascending unit index, which keeps group sizes within one of each other
//! even when scores tie.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCutoffs {
    pub k_groups: usize,
    /// `ĉ_0 ..= ĉ_K`, non-increasing.
    pub cutoffs: Vec<f64>,
}

impl GroupCutoffs {
    /// The finite interior cutoffs `ĉ_1 .. ĉ_{K-1}`.
    pub fn interior(&self) -> &[f64] {
        &self.cutoffs[1..self.k_groups]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub k_groups: usize,
    /// Group label in `1..=K` for each unit, aligned with the score vector.
    pub group_of: Vec<usize>,
}

impl GroupAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k_groups];
        for &g in &self.group_of {
            sizes[g - 1] += 1;
        }
        sizes
    }

    /// `f̂_k` as a 0/1 vector for group `k` (1-based).
    pub fn indicator(&self, k: usize) -> Vec<f64> {
        self.group_of.iter().map(|&g| if g == k { 1.0 } else { 0.0 }).collect()
    }
}

fn check(scores: &[f64], k_groups: usize) -> Result<()> {
    if k_groups < 2 {
        return Err(Error::InvalidParameter(format!("need K >= 2 groups, got {k_groups}")));
    }
    if scores.len() < k_groups {
        return Err(Error::TooFewUnits {
            required: k_groups,
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("proxy scores must be finite".into()));
    }
    Ok(())
}

/// Unit indices ordered by score descending, ties by ascending index.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // partial_cmp so that -0.0 and 0.0 tie; scores are checked finite
    order.sort_unstable_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

pub fn compute_cutoffs(scores: &[f64], k_groups: usize) -> Result<GroupCutoffs> {
    check(scores, k_groups)?;
    let m = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cutoffs = Vec::with_capacity(k_groups + 1);
    cutoffs.push(f64::INFINITY);
    for k in 1..k_groups {
        // #{S > c} <= floor(mk/K) first holds at the (floor(mk/K) + 1)-th largest score
        let allowed = m * k / k_groups;
        cutoffs.push(sorted[allowed]);
    }
    cutoffs.push(f64::NEG_INFINITY);
    Ok(GroupCutoffs { k_groups, cutoffs })
}

/// Rank-based sorted groups: group sizes are `m / K` with the remainder
/// handed out one per group starting from group 1.
pub fn assign_groups(scores: &[f64], k_groups: usize) -> Result<GroupAssignment> {
    check(scores, k_groups)?;
    let m = scores.len();
    let (base, rem) = (m / k_groups, m % k_groups);
    let mut group_of = vec![0; m];
    let mut order = descending_order(scores).into_iter();
    for g in 1..=k_groups {
        let size = base + usize::from(g <= rem);
        for unit in order.by_ref().take(size) {
            group_of[unit] = g;
        }
    }
    Ok(GroupAssignment { k_groups, group_of })
}
