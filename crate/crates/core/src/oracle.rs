//! Exact finite-n moments of trace powers of `H`, independent of the
//! asymptotic machinery.
//!
//! `E Tr H^k = n^{-k/2} Σ E[X_{i1 i2} X_{i2 i3} ... X_{ik i1}]` with
//! `X = √n H`. Index tuples are grouped by their coincidence pattern (a set
//! partition of the k positions); for each pattern the expectation factorizes
//! over distinct edges, and the number of tuples realizing a pattern with given
//! community labels is a product of falling factorials of the community sizes.
//! The cost is independent of n.

use crate::blockmodel::{BlockMatrix, BlockModelParams};
use crate::error::{Error, Result};

pub const MAX_TRACE_POWER: usize = 4;

/// Raw moments of `√n H_ij` per block pair, from the cumulants.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryMoments {
    pub m2: BlockMatrix,
    pub m3: BlockMatrix,
    pub m4: BlockMatrix,
}

impl EntryMoments {
    pub fn new(params: &BlockModelParams) -> Self {
        let k = params.k();
        let (q2, q3, q4) = (params.q2(), params.q3(), params.q4());
        Self {
            m2: q2.clone(),
            m3: q3.clone(),
            m4: BlockMatrix::from_fn(k, |u, v| q4.get(u, v) + 3.0 * q2.get(u, v).powi(2)),
        }
    }

    /// `E X^order` for an entry between communities `u` and `v`.
    pub fn moment(&self, order: usize, u: usize, v: usize) -> f64 {
        match order {
            0 => 1.0,
            1 => 0.0,
            2 => self.m2.get(u, v),
            3 => self.m3.get(u, v),
            4 => self.m4.get(u, v),
            _ => panic!("entry moments are tracked up to order 4"),
        }
    }
}

/// Set partitions of `0..k` as restricted growth strings.
fn set_partitions(k: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for label in 0..=next {
            prefix.push(label);
            extend(prefix, k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(k), k, &mut out);
    out
}

/// Distinct edges of a closed walk with positions labelled by `blocks`, with
/// multiplicities; `None` if the walk steps onto the (zero) diagonal.
fn walk_edges(blocks: &[usize]) -> Option<Vec<((usize, usize), usize)>> {
    let k = blocks.len();
    let mut edges: Vec<((usize, usize), usize)> = Vec::new();
    for t in 0..k {
        let (a, b) = (blocks[t], blocks[(t + 1) % k]);
        if a == b {
            return None;
        }
        let e = (a.min(b), a.max(b));
        match edges.iter_mut().find(|(f, _)| *f == e) {
            Some((_, m)) => *m += 1,
            None => edges.push((e, 1)),
        }
    }
    Some(edges)
}

fn falling_factorial(x: f64, m: usize) -> f64 {
    (0..m).map(|i| x - i as f64).product()
}

fn check_power(k: usize) -> Result<()> {
    if k == 0 || k > MAX_TRACE_POWER {
        return Err(Error::InvalidInput(format!(
            "trace power must be in 1..={MAX_TRACE_POWER}, got {k}"
        )));
    }
    Ok(())
}

/// `E Tr H^k` for community sizes given as reals. For integer sizes this is
/// the exact expectation; as a function of the sizes it is a polynomial, which
/// is what makes exact extrapolation in n possible.
pub fn trace_moment_with_sizes(params: &BlockModelParams, sizes: &[f64], k: usize) -> Result<f64> {
    check_power(k)?;
    let kk = params.k();
    if sizes.len() != kk {
        return Err(Error::InvalidInput(format!("{} sizes for {kk} communities", sizes.len())));
    }
    let moments = EntryMoments::new(params);
    let n: f64 = sizes.iter().sum();
    let mut total = 0.0;
    for blocks in set_partitions(k) {
        let Some(edges) = walk_edges(&blocks) else { continue };
        if edges.iter().any(|&(_, m)| m == 1) {
            continue;
        }
        let b = blocks.iter().max().map_or(0, |m| m + 1);
        // all community labelings of the b distinct indices
        let mut labels = vec![0usize; b];
        loop {
            let mut term: f64 = edges
                .iter()
                .map(|&((u, v), m)| moments.moment(m, labels[u], labels[v]))
                .product();
            if term != 0.0 {
                for (c, &size) in sizes.iter().enumerate() {
                    let count = labels.iter().filter(|&&l| l == c).count();
                    term *= falling_factorial(size, count);
                }
                total += term;
            }
            let mut pos = 0;
            while pos < b {
                labels[pos] += 1;
                if labels[pos] < kk {
                    break;
                }
                labels[pos] = 0;
                pos += 1;
            }
            if pos == b {
                break;
            }
        }
    }
    Ok(total / n.powf(k as f64 / 2.0))
}

fn integer_sizes(params: &BlockModelParams, n: usize) -> Result<Vec<f64>> {
    let sizes = if n == params.n() {
        params.sizes().to_vec()
    } else {
        params.resized(n)?.sizes().to_vec()
    };
    Ok(sizes.into_iter().map(|s| s as f64).collect())
}

/// Exact `E Tr H^k`, `k ≤ 4`, for `n` nodes split in the model's proportions.
pub fn exact_trace_moment(params: &BlockModelParams, n: usize, k: usize) -> Result<f64> {
    check_power(k)?;
    trace_moment_with_sizes(params, &integer_sizes(params, n)?, k)
}

fn pair_sum(sizes: &[f64], f: impl Fn(usize, usize) -> f64) -> f64 {
    let mut s = 0.0;
    for (u, &nu) in sizes.iter().enumerate() {
        for (v, &nv) in sizes.iter().enumerate() {
            let pairs = if u == v { nu * (nu - 1.0) } else { nu * nv };
            s += pairs * f(u, v);
        }
    }
    s
}

/// `Var Tr H² = 2 Σ_{i≠j} (κ4_ij + 2 κ2_ij²) / n²` for real-valued sizes.
pub fn var_tr_h2_with_sizes(params: &BlockModelParams, sizes: &[f64]) -> f64 {
    let n: f64 = sizes.iter().sum();
    let (q2, q4) = (params.q2(), params.q4());
    2.0 * pair_sum(sizes, |u, v| q4.get(u, v) + 2.0 * q2.get(u, v).powi(2)) / (n * n)
}

/// Exact `Var Tr H²` for `n` nodes.
pub fn exact_var_tr_h2(params: &BlockModelParams, n: usize) -> Result<f64> {
    Ok(var_tr_h2_with_sizes(params, &integer_sizes(params, n)?))
}

fn proportional(params: &BlockModelParams, n: f64) -> Vec<f64> {
    params.alpha().iter().map(|a| a * n).collect()
}

/// `lim_n Var Tr H²` with sizes `α n`: the exact variance is `A + B/n`, so
/// `2 v(2n) - v(n)` is the limit for any `n`.
pub fn var_tr_h2_limit(params: &BlockModelParams) -> f64 {
    let v = |n: f64| var_tr_h2_with_sizes(params, &proportional(params, n));
    2.0 * v(2.0) - v(1.0)
}

/// Large-n expansion `E Tr H^k = leading·n + constant + O(1/n)` with sizes
/// `α n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceExpansion {
    pub leading: f64,
    pub constant: f64,
}

/// Reads off the two top coefficients of the polynomial `n^{k/2} E Tr H^k`
/// (degree at most `k/2 + 1`, `k` even) by exact interpolation at
/// `n = 1, ..., k/2 + 2`.
pub fn trace_moment_expansion(params: &BlockModelParams, k: usize) -> Result<TraceExpansion> {
    check_power(k)?;
    if k % 2 == 1 {
        return Ok(TraceExpansion {
            leading: 0.0,
            constant: 0.0,
        });
    }
    let half = k / 2;
    let degree = half + 1;
    let xs: Vec<f64> = (1..=degree + 1).map(|i| i as f64).collect();
    let ys = xs
        .iter()
        .map(|&n| Ok(trace_moment_with_sizes(params, &proportional(params, n), k)? * n.powi(half as i32)))
        .collect::<Result<Vec<f64>>>()?;
    let coeffs = interpolate(&xs, &ys);
    Ok(TraceExpansion {
        leading: coeffs[degree],
        constant: coeffs[half],
    })
}

/// Monomial coefficients of the interpolating polynomial through `(xs, ys)`.
fn interpolate(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let m = xs.len();
    // Newton divided differences, then expand the Newton form
    let mut dd = ys.to_vec();
    for j in 1..m {
        for i in (j..m).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (xs[i] - xs[i - j]);
        }
    }
    let mut coeffs = vec![0.0; m];
    for i in (0..m).rev() {
        // coeffs = coeffs * (x - xs[i]) + dd[i]
        for c in (1..m).rev() {
            coeffs[c] = coeffs[c - 1] - xs[i] * coeffs[c];
        }
        coeffs[0] = -xs[i] * coeffs[0] + dd[i];
    }
    coeffs
}
