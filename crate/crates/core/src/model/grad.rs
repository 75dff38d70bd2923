//! Analytic Euclidean gradients of the composite loss, one parameter block at a time.

use std::str::FromStr;

use nalgebra::DMatrix;

use super::loss::{check_factor_dims, log_bernoulli, sim_pair_terms, vmf_posterior};
use super::types::{CompositeWeights, FeatureUniverse, ModelState, PriorMatrix, RelationalPairSet};
use crate::directional::mean_resultant_ratio;
use crate::error::{domain, Error, Result};
use crate::linalg::{row_dot, symmetrize};
use crate::scalar::Real;

/// Parameter block selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    V,
    W,
    Mu,
    Kappa,
    Beta1,
    Beta2,
    Beta3,
    R,
}

impl Block {
    pub const ALL: [Block; 8] = [
        Block::V,
        Block::W,
        Block::Mu,
        Block::Kappa,
        Block::Beta1,
        Block::Beta2,
        Block::Beta3,
        Block::R,
    ];
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "V" => Ok(Block::V),
            "W" => Ok(Block::W),
            "mu" => Ok(Block::Mu),
            "kappa" => Ok(Block::Kappa),
            "beta1" => Ok(Block::Beta1),
            "beta2" => Ok(Block::Beta2),
            "beta3" => Ok(Block::Beta3),
            "R" => Ok(Block::R),
            other => domain(format!("unknown parameter block {other:?}")),
        }
    }
}

/// Gradient of one block, shaped like the block itself.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockGradient<T: Real> {
    Matrix(DMatrix<T>),
    Matrices(Vec<DMatrix<T>>),
    Scalar(T),
}

impl<T: Real> BlockGradient<T> {
    /// Frobenius inner product with a direction of the same shape.
    pub fn dot(&self, other: &Self) -> T {
        match (self, other) {
            (Self::Matrix(a), Self::Matrix(b)) => a.dot(b),
            (Self::Matrices(a), Self::Matrices(b)) => a.iter().zip(b).map(|(x, y)| x.dot(y)).sum(),
            (Self::Scalar(a), Self::Scalar(b)) => *a * *b,
            _ => panic!("gradient shapes differ"),
        }
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        match self {
            Self::Matrix(m) => m,
            _ => panic!("not a matrix block"),
        }
    }

    pub fn into_matrices(self) -> Vec<DMatrix<T>> {
        match self {
            Self::Matrices(m) => m,
            _ => panic!("not a list block"),
        }
    }

    pub fn into_scalar(self) -> T {
        match self {
            Self::Scalar(s) => s,
            _ => panic!("not a scalar block"),
        }
    }
}

impl<T: Real> ModelState<T> {
    /// Copy with `block` moved by `step * dir` (no projection onto constraints).
    pub fn perturbed(&self, block: Block, dir: &BlockGradient<T>, step: T) -> Self {
        let mut out = self.clone();
        match (block, dir) {
            (Block::V, BlockGradient::Matrix(d)) => out.v += d * step,
            (Block::Mu, BlockGradient::Matrix(d)) => out.mu += d * step,
            (Block::R, BlockGradient::Matrix(d)) => out.rel += d * step,
            (Block::W, BlockGradient::Matrices(ds)) => {
                for (w, d) in out.w.iter_mut().zip(ds) {
                    *w += d * step;
                }
            }
            (Block::Kappa, BlockGradient::Scalar(d)) => out.kappa += *d * step,
            (Block::Beta1, BlockGradient::Scalar(d)) => out.beta1 += *d * step,
            (Block::Beta2, BlockGradient::Scalar(d)) => out.beta2 += *d * step,
            (Block::Beta3, BlockGradient::Scalar(d)) => out.beta3 += *d * step,
            _ => panic!("direction shape does not match block {block:?}"),
        }
        out
    }
}

/// `d l_lr / d V`: `-(2/N) sum_l (1/r_l) W_l^T (U_i - W_l V_i)` per row.
pub fn lr_grad_v<T: Real>(universe: &FeatureUniverse<T>, v: &DMatrix<T>, w: &[DMatrix<T>]) -> DMatrix<T> {
    let mut g = DMatrix::zeros(v.nrows(), v.ncols());
    let scale = T::lit(-2.0) / T::count(universe.total_observations());
    for (s, wl) in universe.sources().iter().zip(w) {
        let ids = s.feature_ids();
        let vl = DMatrix::from_fn(ids.len(), v.ncols(), |row, c| v[(ids[row], c)]);
        // rows of the residual are (U_i - W_l V_i)^T
        let resid = s.embeddings() - &vl * wl.transpose();
        let back = resid * wl * (scale / T::count(s.dim()));
        for (row, &id) in ids.iter().enumerate() {
            let mut gi = g.row_mut(id);
            gi += back.row(row);
        }
    }
    g
}

/// `d l_lr / d W_l = -(2/(N r_l)) sum_{i in S_l} (U_i - W_l V_i) V_i^T`.
pub fn lr_grad_w<T: Real>(universe: &FeatureUniverse<T>, v: &DMatrix<T>, w: &[DMatrix<T>]) -> Vec<DMatrix<T>> {
    let scale = T::lit(-2.0) / T::count(universe.total_observations());
    universe
        .sources()
        .iter()
        .zip(w)
        .map(|(s, wl)| {
            let ids = s.feature_ids();
            let vl = DMatrix::from_fn(ids.len(), v.ncols(), |row, c| v[(ids[row], c)]);
            let resid = s.embeddings() - &vl * wl.transpose();
            resid.transpose() * vl * (scale / T::count(s.dim()))
        })
        .collect()
}

/// Gradients of `l_vmf` in `(V, mu, kappa)`, marginalized over the mixture.
pub fn vmf_grads<T: Real>(
    v: &DMatrix<T>,
    mu: &DMatrix<T>,
    kappa: T,
    priors: &PriorMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>, T)> {
    if !(kappa > T::zero()) {
        return domain(format!("the vMF loss needs kappa > 0, got {kappa}"));
    }
    let post = vmf_posterior(v, mu, kappa, priors)?;
    let n = T::count(v.nrows());
    let a = mean_resultant_ratio(v.ncols(), kappa);
    let mut gv = DMatrix::zeros(v.nrows(), v.ncols());
    let mut gmu = DMatrix::zeros(mu.nrows(), mu.ncols());
    let mut dk = T::zero();
    for (i, row) in post.gamma.iter().enumerate() {
        for &(k, g) in row {
            let mut gvi = gv.row_mut(i);
            gvi -= mu.row(k) * (g / n);
            let mut gmk = gmu.row_mut(k);
            gmk -= v.row(i) * (g / n);
            dk += g * (row_dot(v, i, mu, k) - a);
        }
    }
    let gk = post.total_log_lik() / (n * kappa * kappa) - dk / (n * kappa);
    Ok((gv, gmu, gk))
}

/// Gradients of `l_sim` in `(mu, beta1, beta2)`.
pub fn sim_grads<T: Real>(
    mu: &DMatrix<T>,
    beta1: T,
    beta2: T,
    priors: &PriorMatrix<T>,
    pairs: &RelationalPairSet,
) -> Result<(DMatrix<T>, T, T)> {
    // validation shared with the loss
    super::loss::loss_sim(mu, beta1, beta2, priors, pairs)?;
    let gram = mu * mu.transpose();
    let scale = -T::one() / T::count(pairs.n_sim());
    let mut gmu = DMatrix::zeros(mu.nrows(), mu.ncols());
    let mut g1 = T::zero();
    let mut g2 = T::zero();
    for p in pairs.sim() {
        for (k1, k2, rho, d) in sim_pair_terms(&gram, beta1, beta2, priors, p).parts {
            let w = rho * d;
            if w == T::zero() {
                continue;
            }
            g1 += w;
            g2 += w * gram[(k1, k2)];
            let f = w * beta2 * scale;
            let m2 = mu.row(k2).clone_owned();
            let m1 = mu.row(k1).clone_owned();
            let mut r1 = gmu.row_mut(k1);
            r1 += m2 * f;
            let mut r2 = gmu.row_mut(k2);
            r2 += m1 * f;
        }
    }
    Ok((gmu, g1 * scale, g2 * scale))
}

/// Gradients of `l_rel` in `(V, beta3, R)`; the R gradient is symmetrized.
pub fn rel_grads<T: Real>(
    v: &DMatrix<T>,
    beta3: T,
    rel: &DMatrix<T>,
    pairs: &RelationalPairSet,
) -> Result<(DMatrix<T>, T, DMatrix<T>)> {
    super::loss::loss_rel(v, beta3, rel, pairs)?;
    let scale = -T::one() / T::count(pairs.n_rel());
    let vr = v * rel;
    let mut gv = DMatrix::zeros(v.nrows(), v.ncols());
    let mut g3 = T::zero();
    let mut outer = DMatrix::zeros(v.ncols(), v.ncols());
    for p in pairs.rel() {
        let (_, d) = log_bernoulli(beta3 + row_dot(&vr, p.i, v, p.j), p.label);
        if d == T::zero() {
            continue;
        }
        let f = d * scale;
        g3 += f;
        let rj = vr.row(p.j).clone_owned();
        let ri = vr.row(p.i).clone_owned();
        let mut gi = gv.row_mut(p.i);
        gi += rj * f;
        let mut gj = gv.row_mut(p.j);
        gj += ri * f;
        outer += v.row(p.i).transpose() * v.row(p.j) * f;
    }
    Ok((gv, g3, symmetrize(&outer)))
}

/// Euclidean gradient of the weighted composite loss in one block, other
/// blocks held fixed. Constrained blocks (V, mu) get the ambient gradient.
pub fn grad_block<T: Real>(
    state: &ModelState<T>,
    block: Block,
    universe: &FeatureUniverse<T>,
    priors: &PriorMatrix<T>,
    pairs: &RelationalPairSet,
    weights: &CompositeWeights,
) -> Result<BlockGradient<T>> {
    weights.validate()?;
    check_factor_dims(universe, &state.v, &state.w)?;
    let wv = T::lit(weights.w_vmf);
    let ws = T::lit(weights.w_sim);
    let wr = T::lit(weights.w_rel);
    let use_vmf = weights.w_vmf > 0.0;
    let use_sim = weights.w_sim > 0.0;
    let use_rel = weights.w_rel > 0.0;
    let (r, k) = (state.rank(), state.k());
    Ok(match block {
        Block::V => {
            let mut g = lr_grad_v(universe, &state.v, &state.w);
            if use_vmf {
                g += vmf_grads(&state.v, &state.mu, state.kappa, priors)?.0 * wv;
            }
            if use_rel {
                g += rel_grads(&state.v, state.beta3, &state.rel, pairs)?.0 * wr;
            }
            BlockGradient::Matrix(g)
        }
        Block::W => BlockGradient::Matrices(lr_grad_w(universe, &state.v, &state.w)),
        Block::Mu => {
            let mut g = DMatrix::zeros(k, r);
            if use_vmf {
                g += vmf_grads(&state.v, &state.mu, state.kappa, priors)?.1 * wv;
            }
            if use_sim {
                g += sim_grads(&state.mu, state.beta1, state.beta2, priors, pairs)?.0 * ws;
            }
            BlockGradient::Matrix(g)
        }
        Block::Kappa => BlockGradient::Scalar(if use_vmf {
            vmf_grads(&state.v, &state.mu, state.kappa, priors)?.2 * wv
        } else {
            T::zero()
        }),
        Block::Beta1 | Block::Beta2 => {
            let g = if use_sim {
                let (_, g1, g2) = sim_grads(&state.mu, state.beta1, state.beta2, priors, pairs)?;
                if block == Block::Beta1 {
                    g1
                } else {
                    g2
                }
            } else {
                T::zero()
            };
            BlockGradient::Scalar(g * ws)
        }
        Block::Beta3 => BlockGradient::Scalar(if use_rel {
            rel_grads(&state.v, state.beta3, &state.rel, pairs)?.1 * wr
        } else {
            T::zero()
        }),
        Block::R => BlockGradient::Matrix(if use_rel {
            rel_grads(&state.v, state.beta3, &state.rel, pairs)?.2 * wr
        } else {
            DMatrix::zeros(r, r)
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_names_parse() {
        for (name, b) in [("V", Block::V), ("mu", Block::Mu), ("kappa", Block::Kappa), ("R", Block::R)] {
            assert_eq!(name.parse::<Block>().unwrap(), b);
        }
        assert!(matches!("z".parse::<Block>(), Err(Error::Domain(_))));
    }
}
