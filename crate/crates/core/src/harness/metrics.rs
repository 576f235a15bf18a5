use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Outcome of comparing system A against system B on one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    Win,
    Tie,
    Lose,
}

impl Vote {
    pub fn compare(a: u8, b: u8) -> Self {
        match a.cmp(&b) {
            std::cmp::Ordering::Greater => Vote::Win,
            std::cmp::Ordering::Equal => Vote::Tie,
            std::cmp::Ordering::Less => Vote::Lose,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Vote::Win => Vote::Lose,
            Vote::Tie => Vote::Tie,
            Vote::Lose => Vote::Win,
        }
    }
}

/// Mean of 0/1 relevance scores.
pub fn relevance_rate(scores: &[u8]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("relevance rate of an empty score list"));
    }
    if scores.iter().any(|&s| s > 1) {
        return Err(Error::invalid("relevance scores must be 0 or 1"));
    }
    Ok(scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len() as f64)
}

/// Win, tie and lose percentages of A over B from aligned per-sample scores.
pub fn win_tie_lose(a: &[u8], b: &[u8]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "score lists differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("no samples to compare"));
    }
    let mut counts = [0usize; 3];
    for (&x, &y) in a.iter().zip(b) {
        counts[Vote::compare(x, y) as usize] += 1;
    }
    let pct = |c: usize| 100.0 * c as f64 / a.len() as f64;
    Ok((pct(counts[0]), pct(counts[1]), pct(counts[2])))
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}
