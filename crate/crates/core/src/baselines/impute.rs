//! Completion of partially observed sources and concatenated-SVD embeddings.

use nalgebra::DMatrix;

use crate::error::{dimension, domain, Result};
use crate::linalg::{normalize_rows, orthogonal_procrustes, truncated_svd};
use crate::model::{FeatureUniverse, SourceSet};
use crate::scalar::Real;

/// Every source completed to all `n` features.
#[derive(Debug, Clone)]
pub struct ImputedUniverse<T: Real> {
    pub universe: FeatureUniverse<T>,
    /// `imputed[l][i]` is true when row `i` of source `l` was filled in.
    pub imputed: Vec<Vec<bool>>,
}

/// Fills missing rows of every source from the rank-`r` SVD base `A Sigma` of
/// the reference source, mapped by a scaled orthogonal Procrustes fit on the
/// observed rows. Imputed rows are normalized.
pub fn impute_missing<T: Real>(universe: &FeatureUniverse<T>, reference: usize, r: usize) -> Result<ImputedUniverse<T>> {
    let n = universe.n();
    let Some(base_src) = universe.sources().get(reference) else {
        return domain(format!("reference source {reference} does not exist"));
    };
    if base_src.len() != n {
        return domain(format!(
            "reference source {reference} covers {} of {n} features",
            base_src.len()
        ));
    }
    if r == 0 || r > base_src.dim() {
        return dimension(format!("rank {r} outside 1..={}", base_src.dim()));
    }
    let svd = truncated_svd(base_src.embeddings(), r);
    let base = DMatrix::from_fn(n, svd.values.len(), |i, c| svd.left[(i, c)] * svd.values[c]);

    let mut sources = Vec::with_capacity(universe.num_sources());
    let mut imputed = Vec::with_capacity(universe.num_sources());
    for src in universe.sources() {
        let mut flags = vec![true; n];
        src.feature_ids().iter().for_each(|&i| flags[i] = false);
        if src.len() == n {
            sources.push(src.clone());
            imputed.push(flags);
            continue;
        }
        if src.dim() < base.ncols() {
            return dimension(format!("source {} has dimension {} below rank {r}", src.source_id, src.dim()));
        }
        let overlap = DMatrix::from_fn(src.len(), base.ncols(), |row, c| base[(src.feature_ids()[row], c)]);
        let fit = orthogonal_procrustes(&overlap, src.embeddings())?;
        let mapped = &base * &fit.map * fit.scale;
        let mut full = DMatrix::zeros(n, src.dim());
        for i in 0..n {
            full.set_row(i, &mapped.row(i));
        }
        for (row, &i) in src.feature_ids().iter().enumerate() {
            full.set_row(i, &src.embeddings().row(row));
        }
        let mut missing = DMatrix::from_fn(flags.iter().filter(|&&f| f).count(), src.dim(), |_, _| T::zero());
        let ids: Vec<usize> = (0..n).filter(|&i| flags[i]).collect();
        for (row, &i) in ids.iter().enumerate() {
            missing.set_row(row, &full.row(i));
        }
        for bad in normalize_rows(&mut missing) {
            log::warn!("source {}: imputed row for feature {} is zero", src.source_id, ids[bad]);
            missing[(bad, 0)] = T::one();
        }
        for (row, &i) in ids.iter().enumerate() {
            full.set_row(i, &missing.row(row));
        }
        sources.push(SourceSet::new(src.source_id, (0..n).collect(), full)?);
        imputed.push(flags);
    }
    Ok(ImputedUniverse {
        universe: FeatureUniverse::new(n, sources)?,
        imputed,
    })
}

/// Rank-`r` embedding from the SVD of all sources concatenated column-wise:
/// left singular vectors scaled by singular values, largest-magnitude entry
/// of each singular vector made positive, rows normalized.
pub fn svd_concat_embed<T: Real>(imputed: &ImputedUniverse<T>, r: usize) -> Result<DMatrix<T>> {
    let u = &imputed.universe;
    let n = u.n();
    if let Some(s) = u.sources().iter().find(|s| s.len() != n) {
        return domain(format!("source {} is incomplete", s.source_id));
    }
    let total: usize = u.sources().iter().map(|s| s.dim()).sum();
    let mut concat = DMatrix::zeros(n, total);
    let mut offset = 0;
    for s in u.sources() {
        concat.columns_mut(offset, s.dim()).copy_from(s.embeddings());
        offset += s.dim();
    }
    let svd = truncated_svd(&concat, r);
    let top = svd.values.get(0).copied().unwrap_or_else(T::zero);
    let rank = svd.values.iter().filter(|&&s| s > top * T::lit(1e-12)).count();
    if rank < r {
        log::warn!("concatenated matrix has rank {rank}; reducing r from {r}");
    }
    let mut emb = DMatrix::zeros(n, rank);
    for c in 0..rank {
        let col = svd.left.column(c);
        let lead = col.iter().copied().fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if lead < T::zero() { -T::one() } else { T::one() };
        emb.set_column(c, &(col * (svd.values[c] * sign)));
    }
    for bad in normalize_rows(&mut emb) {
        log::warn!("feature {bad} has a zero concatenated embedding");
    }
    Ok(emb)
}
