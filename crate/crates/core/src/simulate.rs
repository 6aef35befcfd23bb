//! Stochastic block model sampling, the two renormalizations of the adjacency
//! matrix, eigenvalues, and Monte Carlo replicates of linear spectral
//! statistics.
//!
//! Randomness is counter based: replicate `r` of a run with master seed `s`
//! reads the ChaCha8 stream `r` of key `s`, and the upper-triangle entry
//! `(i, j)` consumes the 64-bit word at its row-major position in that stream.
//! Outputs therefore never depend on scheduling or thread count.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::blockmodel::{memberships, BlockMatrix, SbmSpec};
use crate::error::{Error, Result};
use crate::testfn::TestFunction;

pub mod stats;

pub use stats::{qq_points, summarize, two_sample_ks, SummaryStats};

/// Symmetric 0/1 adjacency matrix with zero diagonal, stored densely.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    entries: Vec<u8>,
    seed: u64,
    stream: u64,
}

impl AdjacencyMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.n + j]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of edges.
    pub fn edge_count(&self) -> usize {
        self.entries.iter().map(|&a| a as usize).sum::<usize>() / 2
    }

    /// Builds from explicit rows, checking 0/1 entries, symmetry and the zero
    /// diagonal.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::InvalidInput("adjacency matrix must be square".into()));
            }
            entries.extend_from_slice(row);
        }
        for i in 0..n {
            if entries[i * n + i] != 0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let a = entries[i * n + j];
                if a > 1 || a != entries[j * n + i] {
                    return Err(Error::InvalidInput(format!("entry ({i}, {j}) is not symmetric 0/1")));
                }
            }
        }
        Ok(Self {
            n,
            entries,
            seed: 0,
            stream: 0,
        })
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
fn unit_uniform(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Row-major position of `(i, j)`, `i < j`, among upper-triangle entries.
#[inline]
pub fn upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// The uniform draw that decides entry `(i, j)` (`i < j`) of the matrix
/// sampled with `(seed, stream)`, computed by random access into the stream.
pub fn entry_uniform(seed: u64, stream: u64, n: usize, i: usize, j: usize) -> f64 {
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(2 * upper_index(n, i, j) as u128);
    unit_uniform(rng.next_u64())
}

/// SBM adjacency matrix from stream 0 of `seed`.
pub fn sample_sbm(spec: &SbmSpec, seed: u64) -> AdjacencyMatrix {
    sample_sbm_stream(spec, seed, 0)
}

/// SBM adjacency matrix from stream `stream` of `seed`.
pub fn sample_sbm_stream(spec: &SbmSpec, seed: u64, stream: u64) -> AdjacencyMatrix {
    let n = spec.n();
    let sigma = memberships(spec.sizes());
    let p = spec.ptilde();
    let mut rng = stream_rng(seed, stream);
    let mut entries = vec![0u8; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let a = (unit_uniform(rng.next_u64()) < p.get(sigma[i], sigma[j])) as u8;
            entries[i * n + j] = a;
            entries[j * n + i] = a;
        }
    }
    AdjacencyMatrix {
        n,
        entries,
        seed,
        stream,
    }
}

fn centered(a: &AdjacencyMatrix, sigma: &[usize], p: &BlockMatrix) -> DMatrix<f64> {
    let n = a.n;
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (a.get(i, j) as f64 - p.get(sigma[i], sigma[j])) * scale
        }
    })
}

fn check_layout(a: &AdjacencyMatrix, sizes: &[usize]) -> Result<()> {
    let total: usize = sizes.iter().sum();
    if total != a.n {
        return Err(Error::InvalidInput(format!(
            "community sizes sum to {total}, matrix has n = {}",
            a.n
        )));
    }
    Ok(())
}

/// `H_ij = (A_ij - P̃_σ(i)σ(j)) / √n` off the diagonal, zero on it.
pub fn renormalize_true(a: &AdjacencyMatrix, spec: &SbmSpec) -> Result<DMatrix<f64>> {
    check_layout(a, spec.sizes())?;
    Ok(centered(a, &memberships(spec.sizes()), spec.ptilde()))
}

/// Block-averaged edge probabilities `p̂_kl` over off-diagonal index pairs.
pub fn empirical_probabilities(a: &AdjacencyMatrix, sizes: &[usize]) -> Result<BlockMatrix> {
    check_layout(a, sizes)?;
    let k = sizes.len();
    if let Some(c) = sizes.iter().position(|&s| s < 2) {
        return Err(Error::InvalidInput(format!(
            "community {c} has fewer than two members, so p̂ on its diagonal block is undefined"
        )));
    }
    let sigma = memberships(sizes);
    let mut counts = vec![0u64; k * k];
    for i in 0..a.n {
        for j in (i + 1)..a.n {
            if a.get(i, j) == 1 {
                let (u, v) = (sigma[i], sigma[j]);
                counts[u * k + v] += 1;
                if u != v {
                    counts[v * k + u] += 1;
                }
            }
        }
    }
    Ok(BlockMatrix::from_fn(k, |u, v| {
        // each unordered within-block pair is counted once but N_kk counts
        // ordered pairs
        let (edges, pairs) = if u == v {
            (2 * counts[u * k + u], sizes[u] * (sizes[u] - 1))
        } else {
            (counts[u * k + v], sizes[u] * sizes[v])
        };
        edges as f64 / pairs as f64
    }))
}

/// `Ĥ_ij = (A_ij - p̂_σ(i)σ(j)) / √n` off the diagonal, zero on it.
pub fn renormalize_empirical(a: &AdjacencyMatrix, sizes: &[usize]) -> Result<DMatrix<f64>> {
    let phat = empirical_probabilities(a, sizes)?;
    Ok(centered(a, &memberships(sizes), &phat))
}

/// Ascending eigenvalues of a real symmetric matrix.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let mut eigs: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    if eigs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("eigenvalue iteration produced non-finite values".into()));
    }
    eigs.sort_by(f64::total_cmp);
    Ok(eigs)
}

/// `Σ_i f(λ_i)`.
pub fn lss(eigs: &[f64], f: &TestFunction) -> f64 {
    eigs.iter().map(|&x| f.eval_real(x)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Renormalization {
    /// Centering by the true edge probabilities.
    TrueP,
    /// Centering by block-averaged empirical probabilities.
    EmpiricalP,
}

impl Renormalization {
    pub fn apply(self, a: &AdjacencyMatrix, spec: &SbmSpec) -> Result<DMatrix<f64>> {
        match self {
            Renormalization::TrueP => renormalize_true(a, spec),
            Renormalization::EmpiricalP => renormalize_empirical(a, spec.sizes()),
        }
    }
}

impl fmt::Display for Renormalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Renormalization::TrueP => "true",
            Renormalization::EmpiricalP => "empirical",
        })
    }
}

impl FromStr for Renormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" | "true_p" => Ok(Renormalization::TrueP),
            "empirical" | "empirical_p" => Ok(Renormalization::EmpiricalP),
            other => Err(Error::InvalidInput(format!(
                "renormalization `{other}`: expected `true` or `empirical`"
            ))),
        }
    }
}

/// Replicates of the raw statistic `L_n(f) = Σ_i f(λ_i)`, uncentered.
#[derive(Clone, Debug, PartialEq)]
pub struct LssSampleSet {
    pub label: String,
    pub renormalization: Renormalization,
    pub f: TestFunction,
    pub n: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl LssSampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One replicate: sample `A` from stream `r`, then evaluate every `f` under
/// every renormalization. Output is indexed `[which][f]`.
pub fn replicate(
    spec: &SbmSpec,
    fs: &[TestFunction],
    which: &[Renormalization],
    seed: u64,
    r: u64,
) -> Result<Vec<Vec<f64>>> {
    let a = sample_sbm_stream(spec, seed, r);
    which
        .iter()
        .map(|w| {
            let eigs = symmetric_eigenvalues(&w.apply(&a, spec)?)?;
            Ok(fs.iter().map(|f| lss(&eigs, f)).collect())
        })
        .collect()
}

/// Monte Carlo over `nr` replicates, sharing each sampled adjacency matrix
/// across all renormalizations and test functions. Result is indexed
/// `[which][f]`.
pub fn monte_carlo_many(
    spec: &SbmSpec,
    fs: &[TestFunction],
    nr: usize,
    which: &[Renormalization],
    seed: u64,
) -> Result<Vec<Vec<LssSampleSet>>> {
    if nr < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 replicates, got {nr}")));
    }
    if fs.is_empty() || which.is_empty() {
        return Err(Error::InvalidInput("nothing to simulate".into()));
    }
    let reps: Vec<Vec<Vec<f64>>> = (0..nr as u64)
        .into_par_iter()
        .map(|r| replicate(spec, fs, which, seed, r))
        .collect::<Result<_>>()?;
    let out: Vec<Vec<LssSampleSet>> = which
        .iter()
        .enumerate()
        .map(|(wi, &w)| {
            fs.iter()
                .enumerate()
                .map(|(fi, f)| {
                    let values: Vec<f64> = reps.iter().map(|rep| rep[wi][fi]).collect();
                    LssSampleSet {
                        label: String::new(),
                        renormalization: w,
                        f: f.clone(),
                        n: spec.n(),
                        seed,
                        values,
                    }
                })
                .collect()
        })
        .collect();
    for set in out.iter().flatten() {
        if set.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigen(format!("non-finite statistic for {}", set.f)));
        }
    }
    Ok(out)
}

/// `nr` independent replicates of `L_n(f)`; replicate `r` depends only on
/// `(seed, r)`.
pub fn monte_carlo(
    spec: &SbmSpec,
    f: &TestFunction,
    nr: usize,
    which: Renormalization,
    seed: u64,
) -> Result<LssSampleSet> {
    let mut sets = monte_carlo_many(spec, std::slice::from_ref(f), nr, &[which], seed)?;
    Ok(sets.remove(0).remove(0))
}
