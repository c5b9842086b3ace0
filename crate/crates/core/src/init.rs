//! Deterministic EM initialization from a Ward dendrogram of class scatters.
//!
//! Scatters are compared through their principal square roots,
//! `d(s_i, s_j) = ‖s_i^{1/2} − s_j^{1/2}‖_F`. The tree is built with the
//! nearest-neighbor-chain algorithm and Lance–Williams updates on squared
//! distances, then cut by applying the `n − k` lowest merges.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::stats::{ClassStats, MixtureParams};

/// One agglomeration step: the clusters represented by `a` and `b` joined at
/// `height` (a Ward distance, not squared).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Frobenius distance between principal square roots.
pub fn sqrt_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    Ok((linalg::matrix_sqrt_psd(a)? - linalg::matrix_sqrt_psd(b)?).norm())
}

/// Pairwise squared distances, row-major `n × n`.
fn squared_distances(stats: &[ClassStats]) -> Result<Vec<f64>> {
    let roots: Vec<DMatrix<f64>> = stats
        .iter()
        .map(|s| linalg::matrix_sqrt_psd(&s.scatter))
        .collect::<Result<_>>()?;
    let n = roots.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (&roots[i] - &roots[j]).norm_squared();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(d)
}

/// Ward linkage over a full squared-distance matrix.
///
/// Merges are returned sorted by height; a merged cluster keeps the smaller of
/// its two representative indices. Ties prefer the smallest index.
pub fn ward_linkage(n: usize, mut d2: Vec<f64>) -> Vec<Merge> {
    assert_eq!(d2.len(), n * n, "distance matrix must be n × n");
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::with_capacity(n);

    while merges.len() + 1 < n {
        if chain.is_empty() {
            let first = active.iter().position(|&a| a).expect("an active cluster remains");
            chain.push(first);
        }
        let (a, b) = loop {
            let top = *chain.last().unwrap();
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for c in 0..n {
                if c == top || !active[c] {
                    continue;
                }
                let v = d2[top * n + c];
                if v < best_d {
                    best_d = v;
                    best = c;
                }
            }
            // keep the chain's predecessor on ties so reciprocal pairs terminate
            if let Some(p) = prev {
                if d2[top * n + p] <= best_d {
                    best = p;
                }
            }
            if Some(best) == prev {
                chain.pop();
                chain.pop();
                break (top, best);
            }
            chain.push(best);
        };

        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let d_ab = d2[lo * n + hi];
        let (n_lo, n_hi) = (size[lo] as f64, size[hi] as f64);
        for c in 0..n {
            if !active[c] || c == lo || c == hi {
                continue;
            }
            let n_c = size[c] as f64;
            let v = ((n_lo + n_c) * d2[lo * n + c] + (n_hi + n_c) * d2[hi * n + c] - n_c * d_ab)
                / (n_lo + n_hi + n_c);
            let v = v.max(0.0);
            d2[lo * n + c] = v;
            d2[c * n + lo] = v;
        }
        active[hi] = false;
        size[lo] += size[hi];
        merges.push(Merge {
            a: lo,
            b: hi,
            height: d_ab.max(0.0).sqrt(),
        });
        // chain entries referring to `hi` are gone; `lo` changed its distances
        chain.retain(|&c| c != hi && c != lo);
    }
    merges.sort_by(|x, y| x.height.total_cmp(&y.height));
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Cut a dendrogram into `k` clusters. Labels are numbered by the smallest
/// member index of each cluster.
pub fn cut_tree(n: usize, merges: &[Merge], k: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    for m in merges.iter().take(n.saturating_sub(k)) {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            label_of_root[r]
        })
        .collect()
}

/// Hard cluster labels for the class scatters.
pub fn hierarchical_labels(stats: &[ClassStats], k: usize) -> Result<Vec<usize>> {
    let n = stats.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("cannot cut {n} classes into {k} clusters")));
    }
    let d2 = squared_distances(stats)?;
    Ok(cut_tree(n, &ward_linkage(n, d2), k))
}

/// Initial mixture parameters: cluster shares as weights and
/// `Σ_{i∈C_k} s_i / Σ_{i∈C_k} n_i` as covariances.
pub fn init_hierarchical(stats: &[ClassStats], k: usize) -> Result<MixtureParams> {
    let labels = hierarchical_labels(stats, k)?;
    params_from_labels(stats, &labels, k)
}

/// Pooled parameters for a given hard partition. Rank-deficient pooled
/// covariances get a ridge of `1e-8 · tr(Σ)/p` so EM can start.
pub fn params_from_labels(stats: &[ClassStats], labels: &[usize], k: usize) -> Result<MixtureParams> {
    let n = stats.len();
    let p = stats[0].dim();
    let overall_trace =
        stats.iter().map(|s| s.scatter.trace()).sum::<f64>() / stats.iter().map(|s| s.count).sum::<usize>() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    for c in 0..k {
        let mut num = DMatrix::zeros(p, p);
        let mut den = 0usize;
        for (st, _) in stats.iter().zip(labels).filter(|(_, &l)| l == c) {
            num += &st.scatter;
            den += st.count;
        }
        if den == 0 {
            return Err(Error::Domain(format!("cluster {c} is empty")));
        }
        weights.push(labels.iter().filter(|&&l| l == c).count() as f64 / n as f64);
        let mut sigma = num / den as f64;
        linalg::symmetrize(&mut sigma);
        let (_, rank) = linalg::log_det_and_rank(&sigma, DEFAULT_RANK_TOL)?;
        if rank < p {
            let mut ridge = 1e-8 * sigma.trace() / p as f64;
            if !(ridge > 0.0) {
                ridge = 1e-8 * (overall_trace / p as f64).max(1.0);
            }
            for d in 0..p {
                sigma[(d, d)] += ridge;
            }
        }
        covariances.push(sigma);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    MixtureParams::new(weights, covariances)
}
