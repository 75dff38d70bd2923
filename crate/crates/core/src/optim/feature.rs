//! Feature-level block: latent embeddings, loadings and relatedness parameters.
//!
//! Used for the initial fit (factor model plus relatedness) and for the
//! refinement with cluster labels fixed. Every accepted step is guarded so the
//! block objective never increases.

use nalgebra::{DMatrix, DVector};

use super::config::FitConfig;
use crate::directional::log_normalizer;
use crate::error::{domain, Error, Result};
use crate::linalg::{normalize_rows, orthogonal_procrustes, row_dot, spd_solve, truncated_svd};
use crate::model::grad::{lr_grad_v, rel_grads};
use crate::model::loss::{log_bernoulli, loss_lr};
use crate::model::{FeatureUniverse, ModelState, RelationalPairSet};
use crate::scalar::{sigmoid, Real};

/// Output of a feature-level block.
#[derive(Debug, Clone)]
pub struct FeatureFit<T: Real> {
    pub v: DMatrix<T>,
    pub w: Vec<DMatrix<T>>,
    pub beta3: T,
    pub rel: DMatrix<T>,
    /// Block objective at entry and after every accepted step.
    pub objective_trace: Vec<T>,
    pub sweeps: usize,
}

impl<T: Real> FeatureFit<T> {
    pub fn objective(&self) -> T {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Hard-label vMF anchor `-(1/(n kappa)) sum_i [log C_r(kappa) + kappa mu_{z_i}^T V_i]`.
struct Anchor<'a, T: Real> {
    mu: &'a DMatrix<T>,
    z: &'a [usize],
    kappa: T,
    weight: T,
}

struct Objective<'a, T: Real> {
    universe: &'a FeatureUniverse<T>,
    pairs: &'a RelationalPairSet,
    /// Zero when the relatedness term is off.
    w_rel: T,
    anchor: Option<Anchor<'a, T>>,
}

impl<T: Real> Objective<'_, T> {
    fn uses_rel(&self) -> bool {
        self.w_rel > T::zero()
    }

    fn rel_loss(&self, v: &DMatrix<T>, beta3: T, rel: &DMatrix<T>) -> T {
        let vr = v * rel;
        let total: T = self
            .pairs
            .rel()
            .iter()
            .map(|p| log_bernoulli(beta3 + row_dot(&vr, p.i, v, p.j), p.label).0)
            .sum();
        -total / T::count(self.pairs.n_rel())
    }

    fn value(&self, v: &DMatrix<T>, w: &[DMatrix<T>], beta3: T, rel: &DMatrix<T>) -> Result<T> {
        let mut f = loss_lr(self.universe, v, w)?;
        if self.uses_rel() {
            f += self.w_rel * self.rel_loss(v, beta3, rel);
        }
        if let Some(a) = &self.anchor {
            let n = T::count(v.nrows());
            let fit: T = a.z.iter().enumerate().map(|(i, &k)| row_dot(v, i, a.mu, k)).sum();
            let mut tilde = -fit / n;
            if a.kappa > T::zero() {
                tilde -= log_normalizer(v.ncols(), a.kappa) / a.kappa;
            }
            f += a.weight * tilde;
        }
        if !f.is_finite() {
            return Err(Error::NonFinite("feature-level objective".into()));
        }
        Ok(f)
    }
}

/// Initial fit of `(V, W, beta3, R)` on `l_lr + w_rel l_rel`, starting from
/// per-source SVDs stitched together by Procrustes.
pub fn init_feature_level<T: Real>(
    universe: &FeatureUniverse<T>,
    pairs: &RelationalPairSet,
    config: &FitConfig,
) -> Result<FeatureFit<T>> {
    config.validate()?;
    check_source_dims(universe, config.rank)?;
    let v = warm_start(universe, config.rank)?;
    let w = least_squares_loadings(universe, &v);
    let objective = Objective {
        universe,
        pairs,
        w_rel: rel_weight(config, pairs),
        anchor: None,
    };
    descend(&objective, v, w, T::zero(), DMatrix::zeros(config.rank, config.rank), config)
}

/// Refinement of `(V, W, beta3, R)` with `mu`, `kappa` and the hard labels
/// `z` of `state` fixed.
pub fn feature_refine<T: Real>(
    state: &ModelState<T>,
    universe: &FeatureUniverse<T>,
    pairs: &RelationalPairSet,
    config: &FitConfig,
) -> Result<FeatureFit<T>> {
    config.validate()?;
    let objective = Objective {
        universe,
        pairs,
        w_rel: rel_weight(config, pairs),
        anchor: (config.weights.w_vmf > 0.0).then_some(Anchor {
            mu: &state.mu,
            z: &state.z,
            kappa: state.kappa,
            weight: T::lit(config.weights.w_vmf),
        }),
    };
    descend(&objective, state.v.clone(), state.w.clone(), state.beta3, state.rel.clone(), config)
}

fn rel_weight<T: Real>(config: &FitConfig, pairs: &RelationalPairSet) -> T {
    if config.weights.w_rel > 0.0 && pairs.n_rel() > 0 {
        T::lit(config.weights.w_rel)
    } else {
        T::zero()
    }
}

pub(crate) fn check_source_dims<T: Real>(universe: &FeatureUniverse<T>, rank: usize) -> Result<()> {
    if let Some(s) = universe.sources().iter().find(|s| s.dim() < rank) {
        return domain(format!(
            "source {} has dimension {} below the latent rank {rank}",
            s.source_id,
            s.dim()
        ));
    }
    Ok(())
}

fn descend<T: Real>(
    obj: &Objective<'_, T>,
    mut v: DMatrix<T>,
    mut w: Vec<DMatrix<T>>,
    mut beta3: T,
    mut rel: DMatrix<T>,
    config: &FitConfig,
) -> Result<FeatureFit<T>> {
    let mut current = obj.value(&v, &w, beta3, &rel)?;
    let mut trace = vec![current];
    let mut sweeps = 0;
    for _ in 0..config.max_inner {
        sweeps += 1;
        let start = current;

        let w_new = least_squares_loadings(obj.universe, &v);
        let f = obj.value(&v, &w_new, beta3, &rel)?;
        if f < current {
            w = w_new;
            current = f;
            trace.push(current);
        }

        if obj.uses_rel() {
            if let Some((b3, r)) = relatedness_newton(obj, &v, beta3, &rel, config) {
                let f = obj.value(&v, &w, b3, &r)?;
                if f < current {
                    beta3 = b3;
                    rel = r;
                    current = f;
                    trace.push(current);
                }
            }
        }

        if let Some((v_new, f)) = latent_step(obj, &v, &w, beta3, &rel, current, config)? {
            v = v_new;
            current = f;
            trace.push(current);
        }

        if (start - current).abs() <= T::lit(config.inner_tol) * start.abs().max(T::eps()) {
            break;
        }
    }
    Ok(FeatureFit {
        v,
        w,
        beta3,
        rel,
        objective_trace: trace,
        sweeps,
    })
}

/// Per-source SVD bases stitched onto the largest source by orthogonal
/// Procrustes on overlapping features; rows normalized.
pub fn warm_start<T: Real>(universe: &FeatureUniverse<T>, rank: usize) -> Result<DMatrix<T>> {
    let n = universe.n();
    let sources = universe.sources();
    let bases: Vec<DMatrix<T>> = sources
        .iter()
        .map(|s| {
            let svd = truncated_svd(s.embeddings(), rank);
            let mut base = DMatrix::zeros(s.len(), rank);
            for c in 0..svd.values.len() {
                base.set_column(c, &(svd.left.column(c) * svd.values[c]));
            }
            base
        })
        .collect();

    let mut v = DMatrix::<T>::zeros(n, rank);
    let mut covered = vec![false; n];
    let mut done = vec![false; sources.len()];
    let mut first = 0;
    for (l, s) in sources.iter().enumerate() {
        if s.len() > sources[first].len() {
            first = l;
        }
    }
    let mut next = Some(first);
    while let Some(l) = next {
        done[l] = true;
        let ids = sources[l].feature_ids();
        let overlap: Vec<usize> = (0..ids.len()).filter(|&row| covered[ids[row]]).collect();
        let (map, scale) = if overlap.is_empty() {
            if covered.iter().any(|&c| c) {
                log::warn!("source {} shares no feature with earlier sources; stitched without rotation", sources[l].source_id);
            }
            (DMatrix::identity(rank, rank), T::one())
        } else {
            let a = DMatrix::from_fn(overlap.len(), rank, |r, c| bases[l][(overlap[r], c)]);
            let b = DMatrix::from_fn(overlap.len(), rank, |r, c| v[(ids[overlap[r]], c)]);
            let p = orthogonal_procrustes(&a, &b)?;
            (p.map, p.scale)
        };
        let mapped = &bases[l] * &map * scale;
        for (row, &id) in ids.iter().enumerate() {
            if !covered[id] {
                v.set_row(id, &mapped.row(row));
                covered[id] = true;
            }
        }
        // next: the unprocessed source with the largest overlap, lowest index on ties
        next = None;
        let mut best = 0;
        for (m, s) in sources.iter().enumerate() {
            if done[m] {
                continue;
            }
            let shared = s.feature_ids().iter().filter(|&&id| covered[id]).count();
            if next.is_none() || shared > best {
                next = Some(m);
                best = shared;
            }
        }
    }
    for i in normalize_rows(&mut v) {
        v[(i, 0)] = T::one();
    }
    Ok(v)
}

/// Exact minimizer of `l_lr` over every `W_l` given `V`.
pub fn least_squares_loadings<T: Real>(universe: &FeatureUniverse<T>, v: &DMatrix<T>) -> Vec<DMatrix<T>> {
    universe
        .sources()
        .iter()
        .map(|s| {
            let ids = s.feature_ids();
            let vl = DMatrix::from_fn(ids.len(), v.ncols(), |row, c| v[(ids[row], c)]);
            let gram = vl.transpose() * &vl;
            let rhs = vl.transpose() * s.embeddings();
            spd_solve(&gram, &rhs).transpose()
        })
        .collect()
}

/// Index pairs `(a, b)`, `a <= b`, of the upper triangle of R.
fn upper_triangle(r: usize) -> Vec<(usize, usize)> {
    (0..r).flat_map(|a| (a..r).map(move |b| (a, b))).collect()
}

/// One damped Newton step on `l_rel` in `(beta3, upper triangle of R)`, the
/// Hessian taken as the logistic Fisher information. Returns `None` when no
/// halving decreases the loss.
fn relatedness_newton<T: Real>(
    obj: &Objective<'_, T>,
    v: &DMatrix<T>,
    beta3: T,
    rel: &DMatrix<T>,
    config: &FitConfig,
) -> Option<(T, DMatrix<T>)> {
    let r = v.ncols();
    let tri = upper_triangle(r);
    let dim = 1 + tri.len();
    let pairs = obj.pairs.rel();
    let inv_n = T::one() / T::count(pairs.len());
    let features = |i: usize, j: usize| {
        let mut x = DVector::zeros(dim);
        x[0] = T::one();
        for (t, &(a, b)) in tri.iter().enumerate() {
            x[t + 1] = if a == b {
                v[(i, a)] * v[(j, a)]
            } else {
                v[(i, a)] * v[(j, b)] + v[(i, b)] * v[(j, a)]
            };
        }
        x
    };
    let vr = v * rel;
    let mut grad = DVector::<T>::zeros(dim);
    let mut hess = DMatrix::<T>::zeros(dim, dim);
    for p in pairs {
        let s = beta3 + row_dot(&vr, p.i, v, p.j);
        let (_, d) = log_bernoulli(s, p.label);
        if d == T::zero() {
            continue;
        }
        let x = features(p.i, p.j);
        let q = sigmoid(s);
        grad -= &x * (d * inv_n);
        hess += &x * x.transpose() * (q * (T::one() - q) * inv_n);
    }
    let ridge = T::lit(1e-8) * (T::one() + hess.diagonal().max());
    for t in 0..dim {
        hess[(t, t)] += ridge;
    }
    let step = spd_solve(&hess, &DMatrix::from_column_slice(dim, 1, grad.as_slice()));
    let base = obj.rel_loss(v, beta3, rel);
    let mut t = T::lit(config.step_beta);
    for _ in 0..=config.max_halvings {
        let b3 = beta3 - step[(0, 0)] * t;
        let mut r_new = rel.clone();
        for (k, &(a, b)) in tri.iter().enumerate() {
            r_new[(a, b)] -= step[(k + 1, 0)] * t;
            if a != b {
                r_new[(b, a)] = r_new[(a, b)];
            }
        }
        if obj.rel_loss(v, b3, &r_new) < base {
            return Some((b3, r_new));
        }
        t *= T::lit(0.5);
    }
    None
}

/// Preconditioned Riemannian gradient step on the rows of `V` with
/// backtracking; returns the new `V` and objective when it decreases.
fn latent_step<T: Real>(
    obj: &Objective<'_, T>,
    v: &DMatrix<T>,
    w: &[DMatrix<T>],
    beta3: T,
    rel: &DMatrix<T>,
    current: T,
    config: &FitConfig,
) -> Result<Option<(DMatrix<T>, T)>> {
    let (n, r) = (v.nrows(), v.ncols());
    let universe = obj.universe;
    let mut grad = lr_grad_v(universe, v, w);
    let big_n = T::count(universe.total_observations());
    let lr_curv: Vec<DMatrix<T>> = universe
        .sources()
        .iter()
        .zip(w)
        .map(|(s, wl)| wl.transpose() * wl * (T::lit(2.0) / (big_n * T::count(s.dim()))))
        .collect();
    let mut precond: Vec<DMatrix<T>> = (0..n)
        .map(|i| {
            let mut p = DMatrix::zeros(r, r);
            for &(l, _) in universe.memberships(i) {
                p += &lr_curv[l];
            }
            p
        })
        .collect();
    if obj.uses_rel() {
        grad += rel_grads(v, beta3, rel, obj.pairs)?.0 * obj.w_rel;
        let vr = v * rel;
        let scale = obj.w_rel / T::count(obj.pairs.n_rel());
        for p in obj.pairs.rel() {
            let q = sigmoid(beta3 + row_dot(&vr, p.i, v, p.j));
            let c = q * (T::one() - q) * scale;
            let rj = vr.row(p.j).transpose();
            let ri = vr.row(p.i).transpose();
            precond[p.i] += &rj * rj.transpose() * c;
            precond[p.j] += &ri * ri.transpose() * c;
        }
    }
    if let Some(a) = &obj.anchor {
        let f = a.weight / T::count(n);
        for (i, &k) in a.z.iter().enumerate() {
            let mut gi = grad.row_mut(i);
            gi -= a.mu.row(k) * f;
            for c in 0..r {
                precond[i][(c, c)] += f;
            }
        }
    }

    let mut dir = DMatrix::zeros(n, r);
    for i in 0..n {
        let vi = v.row(i).transpose();
        let gi = grad.row(i).transpose();
        let gt = &gi - &vi * vi.dot(&gi);
        if gt.norm() == T::zero() {
            continue;
        }
        let mut p = precond[i].clone();
        let ridge = T::lit(1e-10) * (T::one() + p.trace());
        for c in 0..r {
            p[(c, c)] += ridge;
        }
        let d = spd_solve(&p, &DMatrix::from_column_slice(r, 1, gt.as_slice())).column(0).into_owned();
        let d = &d - &vi * vi.dot(&d);
        dir.set_row(i, &(-d).transpose());
    }

    let mut t = T::lit(config.step_v);
    for _ in 0..=config.max_halvings {
        let mut cand = v + &dir * t;
        normalize_rows(&mut cand);
        let f = obj.value(&cand, w, beta3, rel)?;
        if f < current {
            return Ok(Some((cand, f)));
        }
        t *= T::lit(0.5);
    }
    Ok(None)
}
