//! The K-dimensional quadratic vector equation
//!
//! ```text
//! -1 / M_l(z) = z + Σ_m Q2[l][m] α_m M_m(z),   Im z > 0,
//! ```
//!
//! whose unique solution with `Im M_l > 0` gives the limiting resolvent
//! diagonal on community `l`. The aggregate `Σ_l α_l M_l(z)` is the Stieltjes
//! transform of the limiting spectral distribution.

use num_complex::Complex64;

use crate::blockmodel::BlockModelParams;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Lu};

/// Absolute residual every returned solution satisfies.
pub const QVE_TOLERANCE: f64 = 1e-12;

const DAMPING: f64 = 0.5;
const MAX_FIXED_POINT_ITERS: usize = 10_000;
const STALL_WINDOW: usize = 100;
const STALL_RATIO: f64 = 0.9;
const MAX_NEWTON_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct QveSolution {
    pub z: Complex64,
    pub m: Vec<Complex64>,
    /// `max_l |1/M_l + z + Σ_m Q2[l][m] α_m M_m|`
    pub residual: f64,
}

impl QveSolution {
    pub fn conj(&self) -> Self {
        Self {
            z: self.z.conj(),
            m: self.m.iter().map(|v| v.conj()).collect(),
            residual: self.residual,
        }
    }

    /// `Σ_l α_l M_l(z)`.
    pub fn stieltjes(&self, alpha: &[f64]) -> Complex64 {
        self.m.iter().zip(alpha).map(|(m, a)| m * a).sum()
    }
}

/// Residual of a candidate solution.
pub fn residual(params: &BlockModelParams, z: Complex64, m: &[Complex64]) -> f64 {
    let field = self_energy(params, z, m);
    m.iter()
        .zip(&field)
        .map(|(mi, fi)| (mi.inv() + fi).norm())
        .fold(0.0, f64::max)
}

/// `z + Q2 (α ∘ M)`, componentwise.
fn self_energy(params: &BlockModelParams, z: Complex64, m: &[Complex64]) -> Vec<Complex64> {
    let (q2, alpha) = (params.q2(), params.alpha());
    (0..params.k())
        .map(|l| z + (0..params.k()).map(|j| m[j] * (q2.get(l, j) * alpha[j])).sum::<Complex64>())
        .collect()
}

/// Solves the QVE at `z` (`Im z ≠ 0`). Points in the lower half-plane are
/// handled through `M(z̄) = conj(M(z))`.
pub fn solve_qve(params: &BlockModelParams, z: Complex64) -> Result<QveSolution> {
    if !(z.im != 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::RealAxis(z));
    }
    if z.im < 0.0 {
        return solve_upper(params, z.conj(), None).map(|s| s.conj());
    }
    solve_upper(params, z, None)
}

/// Same as [`solve_qve`], but first tries Newton from `guess`, which should be
/// the solution at a nearby point of the same half-plane.
pub fn solve_qve_near(
    params: &BlockModelParams,
    z: Complex64,
    guess: &[Complex64],
) -> Result<QveSolution> {
    if !(z.im != 0.0) {
        return Err(Error::RealAxis(z));
    }
    if z.im < 0.0 {
        let g: Vec<Complex64> = guess.iter().map(|v| v.conj()).collect();
        return solve_upper(params, z.conj(), Some(&g)).map(|s| s.conj());
    }
    solve_upper(params, z, Some(guess))
}

fn solve_upper(
    params: &BlockModelParams,
    z: Complex64,
    guess: Option<&[Complex64]>,
) -> Result<QveSolution> {
    if let Some(g) = guess {
        if let Ok(sol) = newton(params, z, g.to_vec()) {
            return Ok(sol);
        }
    }
    let (m, last) = match fixed_point(params, z) {
        Ok(sol) => return Ok(sol),
        Err(state) => state,
    };
    if let Ok(sol) = newton(params, z, m) {
        return Ok(sol);
    }
    continuation(params, z).map_err(|_| Error::NonConvergence { z, residual: last })
}

/// Damped iteration `M ← (1-θ) M + θ (-1 / (z + Q2 (α ∘ M)))` from `M = -1/z`.
/// On stall or budget exhaustion returns the last iterate and its residual.
fn fixed_point(
    params: &BlockModelParams,
    z: Complex64,
) -> std::result::Result<QveSolution, (Vec<Complex64>, f64)> {
    let k = params.k();
    let mut m = vec![-z.inv(); k];
    let mut checkpoint = f64::INFINITY;
    let mut res = f64::INFINITY;
    for iter in 0..MAX_FIXED_POINT_ITERS {
        let field = self_energy(params, z, &m);
        res = m
            .iter()
            .zip(&field)
            .map(|(mi, fi)| (mi.inv() + fi).norm())
            .fold(0.0, f64::max);
        if res <= QVE_TOLERANCE && m.iter().all(|v| v.im > 0.0) {
            return Ok(QveSolution { z, m, residual: res });
        }
        if !res.is_finite() {
            break;
        }
        if iter % STALL_WINDOW == 0 {
            if iter > 0 && res > STALL_RATIO * checkpoint {
                break;
            }
            checkpoint = res;
        }
        for (mi, fi) in m.iter_mut().zip(&field) {
            *mi = *mi * (1.0 - DAMPING) - fi.inv() * DAMPING;
        }
    }
    Err((m, res))
}

/// Newton on `F_l(M) = 1/M_l + z + Σ_m Q2[l][m] α_m M_m` with backtracking that
/// keeps every `Im M_l > 0`.
fn newton(params: &BlockModelParams, z: Complex64, mut m: Vec<Complex64>) -> Result<QveSolution> {
    let k = params.k();
    let (q2, alpha) = (params.q2(), params.alpha());
    let fail = |residual| Error::NonConvergence { z, residual };
    if m.iter().any(|v| !(v.im > 0.0)) {
        return Err(fail(f64::INFINITY));
    }
    let eval = |m: &[Complex64]| -> (Vec<Complex64>, f64) {
        let field = self_energy(params, z, m);
        let f: Vec<Complex64> = m.iter().zip(&field).map(|(mi, fi)| mi.inv() + fi).collect();
        let r = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
        (f, r)
    };
    let (mut f, mut res) = eval(&m);
    for _ in 0..MAX_NEWTON_ITERS {
        if res <= QVE_TOLERANCE {
            return Ok(QveSolution { z, m, residual: res });
        }
        let jac = CMatrix::from_fn(k, |l, j| {
            let diag = if l == j { -(m[l] * m[l]).inv() } else { Complex64::new(0.0, 0.0) };
            diag + q2.get(l, j) * alpha[j]
        });
        let lu = Lu::factor(&jac).ok_or_else(|| fail(res))?;
        let step: Vec<Complex64> = lu.solve(&f.iter().map(|v| -v).collect::<Vec<_>>());
        let mut lambda = 1.0;
        loop {
            let trial: Vec<Complex64> = m.iter().zip(&step).map(|(a, d)| a + d * lambda).collect();
            if trial.iter().all(|v| v.im > 0.0) {
                let (tf, tr) = eval(&trial);
                if tr < res || tr <= QVE_TOLERANCE {
                    m = trial;
                    f = tf;
                    res = tr;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                // stagnation at round-off level counts as converged
                if res <= QVE_TOLERANCE {
                    return Ok(QveSolution { z, m, residual: res });
                }
                return Err(fail(res));
            }
        }
    }
    if res <= QVE_TOLERANCE {
        Ok(QveSolution { z, m, residual: res })
    } else {
        Err(fail(res))
    }
}

/// Walks down from `z + i` to `z`, halving the extra imaginary part and
/// warm-starting Newton at each step.
fn continuation(params: &BlockModelParams, z: Complex64) -> Result<QveSolution> {
    let lift = 1.0_f64.max(z.im);
    let mut shift = lift;
    let top = z + Complex64::new(0.0, shift);
    let mut current = fixed_point(params, top).map_err(|(_, r)| Error::NonConvergence {
        z: top,
        residual: r,
    })?;
    while shift > 1e-3 * z.im {
        shift *= 0.5;
        let zs = z + Complex64::new(0.0, shift);
        current = newton(params, zs, current.m)?;
    }
    newton(params, z, current.m)
}

/// `Σ_l α_l M_l(z)`, the limiting Stieltjes transform.
pub fn stieltjes_total(params: &BlockModelParams, z: Complex64) -> Result<Complex64> {
    Ok(solve_qve(params, z)?.stieltjes(params.alpha()))
}

/// Limiting spectral density at `x`, by Stieltjes inversion at height `eta`.
pub fn lsd_density(params: &BlockModelParams, x: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let s = stieltjes_total(params, Complex64::new(x, eta))?;
    Ok((s.im / std::f64::consts::PI).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportEstimate {
    /// `supp(μ∞) ⊆ [-edge, edge]`
    pub edge: f64,
    pub margin: f64,
    /// `2 sqrt(max_k Σ_l α_l Q2[k][l])`
    pub crude_bound: f64,
}

const EDGE_SCAN_STEPS: usize = 400;
const EDGE_SCAN_ETA: f64 = 1e-10;
const EDGE_DENSITY_FLOOR: f64 = 1e-6;

/// Upper bound on the support edge. The limiting measure is symmetric, so
/// only the right edge is located: scan inward from the crude bound until
/// the density exceeds a small floor.
pub fn spectral_edge(params: &BlockModelParams, margin: f64) -> SupportEstimate {
    let crude = crude_edge_bound(params);
    let step = crude / EDGE_SCAN_STEPS as f64;
    let mut edge = crude;
    let mut guess: Option<Vec<Complex64>> = None;
    for i in 0..EDGE_SCAN_STEPS {
        let x = crude - step * i as f64;
        let z = Complex64::new(x, EDGE_SCAN_ETA);
        let sol = match &guess {
            Some(g) => solve_qve_near(params, z, g),
            None => solve_qve(params, z),
        };
        let Ok(sol) = sol else {
            // can't resolve the density here; stay conservative
            guess = None;
            continue;
        };
        let density = sol.stieltjes(params.alpha()).im / std::f64::consts::PI;
        if density > EDGE_DENSITY_FLOOR {
            edge = (x + step).min(crude);
            break;
        }
        guess = Some(sol.m);
    }
    SupportEstimate {
        edge: edge + margin,
        margin,
        crude_bound: crude,
    }
}

pub fn crude_edge_bound(params: &BlockModelParams) -> f64 {
    let (q2, alpha) = (params.q2(), params.alpha());
    let max_row = (0..params.k())
        .map(|r| (0..params.k()).map(|c| q2.get(r, c) * alpha[c]).sum::<f64>())
        .fold(0.0, f64::max);
    2.0 * max_row.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmodel::BlockMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Closed-form Stieltjes transform of the semicircle law with variance
    /// `v`, on the branch with `Im m > 0` for `Im z > 0`.
    fn semicircle(z: Complex64, v: f64) -> Complex64 {
        let root = (z * z - 4.0 * v).sqrt();
        let cands = [(-z + root) / (2.0 * v), (-z - root) / (2.0 * v)];
        if z.im > 0.0 {
            *cands.iter().max_by(|a, b| a.im.total_cmp(&b.im)).unwrap()
        } else {
            *cands.iter().min_by(|a, b| a.im.total_cmp(&b.im)).unwrap()
        }
    }

    fn unit() -> BlockModelParams {
        BlockModelParams::with_variances(vec![10], BlockMatrix::filled(1, 1.0)).unwrap()
    }

    fn three_block() -> BlockModelParams {
        let q2 = BlockMatrix::from_rows(vec![
            vec![0.25, 0.21, 0.09],
            vec![0.21, 0.16, 0.24],
            vec![0.09, 0.24, 0.21],
        ])
        .unwrap();
        BlockModelParams::with_variances(vec![30, 50, 20], q2).unwrap()
    }

    #[test]
    fn unit_semicircle_at_2i() {
        let sol = solve_qve(&unit(), c(0.0, 2.0)).unwrap();
        assert!((sol.m[0] - c(0.0, 2f64.sqrt() - 1.0)).norm() < 1e-12);
        assert!(sol.residual <= QVE_TOLERANCE);
        let s = stieltjes_total(&unit(), c(0.0, 2.0)).unwrap();
        assert!((s - c(0.0, 0.41421356)).norm() < 1e-8);
    }

    #[test]
    fn real_axis_rejected() {
        assert!(matches!(solve_qve(&unit(), c(1.0, 0.0)), Err(Error::RealAxis(_))));
    }

    #[test]
    fn homogeneous_collapse() {
        let cval = 0.7;
        let p = BlockModelParams::with_variances(vec![3, 9], BlockMatrix::filled(2, cval)).unwrap();
        for z in [c(0.3, 0.05), c(-1.2, 0.4), c(2.5, 1.0), c(0.0, 3.0), c(1.0, -0.2)] {
            let sol = solve_qve(&p, z).unwrap();
            let m = semicircle(z, cval);
            for ml in &sol.m {
                assert!((ml - m).norm() <= 1e-10, "z={z} {ml} vs {m}");
            }
        }
    }

    #[test]
    fn large_z_leading_term() {
        let p = three_block();
        let z = c(0.0, 10.0);
        let sol = solve_qve(&p, z).unwrap();
        for ml in &sol.m {
            assert!((ml + z.inv()).norm() <= 0.02);
        }
        let s = stieltjes_total(&p, z).unwrap();
        assert!((s + z.inv()).norm() <= 0.02);
    }

    #[test]
    fn large_z_expansion_decays_cubically() {
        let p = three_block();
        let row: Vec<f64> = (0..3)
            .map(|l| (0..3).map(|j| p.q2().get(l, j) * p.alpha()[j]).sum())
            .collect();
        let mut prev = f64::INFINITY;
        for r in [10.0, 20.0, 40.0, 80.0] {
            let z = c(0.3 * r, r);
            let sol = solve_qve(&p, z).unwrap();
            let err = (0..3)
                .map(|l| (sol.m[l] + z.inv() + row[l] / (z * z * z)).norm())
                .fold(0.0, f64::max);
            // next term is O(|z|^-5)
            assert!(err < 10.0 / r.powi(5), "r={r} err={err}");
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn herglotz_and_conjugation_on_grid() {
        let p = three_block();
        for i in 0..100 {
            let eta = 0.05 + (10.0 - 0.05) * i as f64 / 99.0;
            let x = -3.0 + 6.0 * ((i * 37) % 100) as f64 / 99.0;
            let z = c(x, eta);
            let up = solve_qve(&p, z).unwrap();
            assert!(up.residual <= QVE_TOLERANCE);
            assert!(up.m.iter().all(|v| v.im > 0.0), "z={z}");
            let down = solve_qve(&p, z.conj()).unwrap();
            for (a, b) in up.m.iter().zip(&down.m) {
                assert!((a.conj() - b).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn density_of_semicircle() {
        let d0 = lsd_density(&unit(), 0.0, 1e-5).unwrap();
        assert!((d0 - 1.0 / std::f64::consts::PI).abs() < 1e-3);
        let d3 = lsd_density(&unit(), 3.0, 1e-5).unwrap();
        assert!(d3 <= 1e-3);
        assert!(lsd_density(&unit(), 0.0, 0.0).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        for p in [unit(), three_block()] {
            let edge = spectral_edge(&p, 0.0).edge;
            // midpoint rule; the square-root edges limit accuracy to ~h^1.5
            let steps = 4000;
            let h = 2.0 * edge / steps as f64;
            let total: f64 = (0..steps)
                .map(|i| lsd_density(&p, -edge + (i as f64 + 0.5) * h, 1e-9).unwrap() * h)
                .sum();
            assert!((total - 1.0).abs() < 1e-3, "total={total}");
        }
    }

    #[test]
    fn edge_of_semicircle() {
        let e = spectral_edge(&unit(), 0.0);
        assert!(e.edge >= 2.0 && e.edge <= 2.05, "{e:?}");
        assert_eq!(e.crude_bound, 2.0);
        let with_margin = spectral_edge(&unit(), 0.3);
        assert!((with_margin.edge - e.edge - 0.3).abs() < 1e-12);
        assert!(with_margin.edge <= with_margin.crude_bound + 0.3);
    }

    #[test]
    fn edge_scaling_and_collapse() {
        let scaled = BlockModelParams::with_variances(vec![10], BlockMatrix::filled(1, 4.0)).unwrap();
        assert!((crude_edge_bound(&scaled) - 2.0 * crude_edge_bound(&unit())).abs() < 1e-15);

        let homog = BlockModelParams::with_variances(vec![3, 7], BlockMatrix::filled(2, 1.0)).unwrap();
        let a = spectral_edge(&homog, 0.0).edge;
        let b = spectral_edge(&unit(), 0.0).edge;
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn edge_bounds_inhomogeneous_support() {
        let p = three_block();
        let e = spectral_edge(&p, 0.0);
        assert!(e.edge <= e.crude_bound);
        assert!(lsd_density(&p, e.edge + 1e-3, 1e-10).unwrap() < 1e-5);
        assert!(lsd_density(&p, e.edge - 0.05, 1e-10).unwrap() > 1e-3);
    }
}
