//! Clustering agreement, ranking and margin metrics.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{domain, Result};
use crate::linalg::psd_sqrt;
use crate::model::{Channel, LabeledPair, PriorMatrix};
use crate::scalar::Real;

/// Adjusted mutual information with expected mutual information under the
/// permutation model and max-entropy normalization.
pub fn ami(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return domain(format!("partitions have {} and {} items", a.len(), b.len()));
    }
    if a.is_empty() {
        return domain("partitions are empty");
    }
    let n = a.len();
    let (ra, rb) = (relabel(a), relabel(b));
    let (ka, kb) = (ra.iter().max().unwrap() + 1, rb.iter().max().unwrap() + 1);
    if ka == kb && (ka == 1 || ka == n) {
        return Ok(1.0);
    }
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in ra.iter().zip(&rb) {
        table[x][y] += 1;
    }
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let nf = n as f64;
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let (ha, hb) = (entropy(&rows), entropy(&cols));
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i][j];
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (nf * c / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let emi = expected_mutual_information(&rows, &cols, n);
    let denom = ha.max(hb) - emi;
    if denom.abs() < 1e-15 {
        return Ok(if (mi - emi).abs() < 1e-15 { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}

fn relabel(x: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    x.iter()
        .map(|&v| {
            let next = map.len();
            *map.entry(v).or_insert(next)
        })
        .collect()
}

fn expected_mutual_information(rows: &[usize], cols: &[usize], n: usize) -> f64 {
    let mut ln_fact = vec![0.0f64; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in rows {
        for &b in cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                let ln_p = ln_fact[a] + ln_fact[b] + ln_fact[n - a] + ln_fact[n - b]
                    - ln_fact[n]
                    - ln_fact[nij]
                    - ln_fact[a - nij]
                    - ln_fact[b - nij]
                    - ln_fact[n + nij - a - b];
                emi += term * ln_p.exp();
            }
        }
    }
    emi
}

/// Area under the ROC curve from the rank-sum statistic; ties count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return domain(format!("{} scores for {} labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return domain("scores must be finite");
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return domain("AUC needs both positive and negative labels");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (1-based start+1..=end) share their average
        let avg = (start + 1 + end) as f64 / 2.0;
        rank_sum += avg * order[start..end].iter().filter(|&&i| labels[i]).count() as f64;
        start = end;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Pair scores: cosine of latent embeddings for similarity, cosine after the
/// symmetric square root of the PSD part of `rel` for relatedness.
pub fn score_pairs<T: Real>(v: &DMatrix<T>, rel: &DMatrix<T>, pairs: &[LabeledPair], channel: Channel) -> Vec<f64> {
    let x = match channel {
        Channel::Similarity => v.clone(),
        Channel::Relatedness => v * psd_sqrt(rel).0,
    };
    pairs
        .iter()
        .map(|p| {
            let (a, b) = (x.row(p.i), x.row(p.j));
            let denom = a.norm() * b.norm();
            if denom > T::zero() {
                (a.dot(&b) / denom).as_f64()
            } else {
                0.0
            }
        })
        .collect()
}

/// Separation between each feature's true cluster and its best competitor.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginStats {
    /// `s_i(z_i) - max_{k != z_i} s_i(k)` with `s_i(k) = ln pi_ik + kappa mu_k^T V_i`
    /// over the prior support; `+inf` when there is no competitor.
    pub margins: Vec<f64>,
    /// Minimum, quartiles and maximum of the margins.
    pub quantiles: [f64; 5],
    /// Share of margins at or below the threshold.
    pub below_threshold: f64,
    /// True when some feature has no competitor (every margin infinite at `K = 1`).
    pub has_undefined: bool,
}

pub fn margin_stats<T: Real>(
    v: &DMatrix<T>,
    mu: &DMatrix<T>,
    kappa: T,
    priors: &PriorMatrix<T>,
    z_true: &[usize],
    threshold: f64,
) -> Result<MarginStats> {
    if priors.n() != v.nrows() || z_true.len() != v.nrows() || priors.k() != mu.nrows() {
        return crate::error::dimension("margin inputs disagree on n or K");
    }
    let kappa = kappa.as_f64();
    let mut margins = Vec::with_capacity(v.nrows());
    for (i, &zi) in z_true.iter().enumerate() {
        let score = |c: usize, p: f64| p.ln() + kappa * v.row(i).dot(&mu.row(c)).as_f64();
        let own = score(zi, priors.prob(i, zi).as_f64());
        let rival = priors
            .support(i)
            .iter()
            .filter(|&&(c, _)| c != zi)
            .map(|&(c, p)| score(c, p.as_f64()))
            .fold(f64::NEG_INFINITY, f64::max);
        margins.push(if rival == f64::NEG_INFINITY { f64::INFINITY } else { own - rival });
    }
    let has_undefined = margins.iter().any(|m| *m == f64::INFINITY);
    let below = margins.iter().filter(|&&m| m <= threshold).count();
    Ok(MarginStats {
        quantiles: quantiles(&margins),
        below_threshold: if margins.is_empty() { 0.0 } else { below as f64 / margins.len() as f64 },
        margins,
        has_undefined,
    })
}

/// Minimum, quartiles and maximum by linear interpolation; NaN when empty.
pub fn quantiles(x: &[f64]) -> [f64; 5] {
    if x.is_empty() {
        return [f64::NAN; 5];
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (s.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        if lo == hi || s[lo] == s[hi] {
            s[lo]
        } else {
            s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
        }
    };
    [at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)]
}

/// Median by linear interpolation; NaN when empty.
pub fn median(x: &[f64]) -> f64 {
    quantiles(x)[2]
}
