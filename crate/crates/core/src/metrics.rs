//! Harrell's concordance index under right censoring.
//!
//! A pair `(i, j)` is comparable when `i`'s event was observed and
//! `time(i) < time(j)`; `j` may be censored. Equal times never form a pair.
//! The pair is concordant when the earlier failure carries the higher risk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparablePairs {
    pub pairs: Vec<(usize, usize)>,
}

impl ComparablePairs {
    pub fn num(&self) -> usize {
        self.pairs.len()
    }
}

/// Enumerates comparable pairs in `(i, j)` lexicographic order.
pub fn comparable_pairs(time: &[f64], event: &[bool]) -> Result<ComparablePairs> {
    check_lengths(time.len(), event.len())?;
    let mut pairs = Vec::new();
    for i in 0..time.len() {
        if !event[i] {
            continue;
        }
        for j in 0..time.len() {
            if time[i] < time[j] {
                pairs.push((i, j));
            }
        }
    }
    Ok(ComparablePairs { pairs })
}

/// How pairs with equal predicted risk are scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Tied risks count one half.
    #[default]
    Harrell,
    /// Tied risks count zero (the literal indicator).
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIndexResult {
    pub c: f64,
    pub concordant: u64,
    pub tied_score: u64,
    pub discordant: u64,
    pub num: u64,
}

impl CIndexResult {
    fn from_counts(concordant: u64, tied_score: u64, discordant: u64, policy: TiePolicy) -> Result<Self> {
        let num = concordant + tied_score + discordant;
        if num == 0 {
            return Err(Error::NoComparablePairs);
        }
        let credit = match policy {
            TiePolicy::Harrell => concordant as f64 + 0.5 * tied_score as f64,
            TiePolicy::Strict => concordant as f64,
        };
        Ok(Self {
            c: credit / num as f64,
            concordant,
            tied_score,
            discordant,
            num,
        })
    }
}

fn check_lengths(n: usize, m: usize) -> Result<()> {
    if n != m {
        return Err(Error::Dimension { expected: n, got: m });
    }
    Ok(())
}

fn check_risk(time: &[f64], event: &[bool], risk: &[f64]) -> Result<()> {
    check_lengths(time.len(), event.len())?;
    check_lengths(time.len(), risk.len())?;
    if let Some(r) = risk.iter().find(|r| r.is_nan()) {
        return Err(Error::InvalidArgument(format!("risk score {r}")));
    }
    Ok(())
}

/// Reference O(n^2) scan over all comparable pairs.
pub fn concordance_index_pairwise(
    time: &[f64],
    event: &[bool],
    risk: &[f64],
    policy: TiePolicy,
) -> Result<CIndexResult> {
    check_risk(time, event, risk)?;
    let (mut conc, mut tied, mut disc) = (0u64, 0u64, 0u64);
    for (i, j) in comparable_pairs(time, event)?.pairs {
        if risk[i] > risk[j] {
            conc += 1;
        } else if risk[i] == risk[j] {
            tied += 1;
        } else {
            disc += 1;
        }
    }
    CIndexResult::from_counts(conc, tied, disc, policy)
}

/// Fenwick tree over risk ranks.
struct RankCounts {
    tree: Vec<u64>,
}

impl RankCounts {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks `< rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// O(n log n) concordance index; agrees exactly with
/// [`concordance_index_pairwise`].
pub fn concordance_index_with(
    time: &[f64],
    event: &[bool],
    risk: &[f64],
    policy: TiePolicy,
) -> Result<CIndexResult> {
    check_risk(time, event, risk)?;
    let n = time.len();
    let mut levels: Vec<f64> = risk.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| a == b);
    let rank = |r: f64| levels.partition_point(|&v| v < r);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));

    let mut later = RankCounts::new(levels.len());
    let mut inserted = 0u64;
    let (mut conc, mut tied, mut disc) = (0u64, 0u64, 0u64);
    let mut k = 0;
    while k < n {
        let t = time[order[k]];
        let mut end = k;
        while end < n && time[order[end]] == t {
            end += 1;
        }
        for &i in &order[k..end] {
            if event[i] {
                let r = rank(risk[i]);
                let below = later.below(r);
                let at_or_below = later.below(r + 1);
                conc += below;
                tied += at_or_below - below;
                disc += inserted - at_or_below;
            }
        }
        for &i in &order[k..end] {
            later.add(rank(risk[i]));
            inserted += 1;
        }
        k = end;
    }
    CIndexResult::from_counts(conc, tied, disc, policy)
}

/// Harrell's C with half credit for tied risks.
pub fn concordance_index(time: &[f64], event: &[bool], risk: &[f64]) -> Result<CIndexResult> {
    concordance_index_with(time, event, risk, TiePolicy::Harrell)
}
