//! K×K linear systems for the CLT mean kernel `Mean(z)` and covariance kernel
//! `Cov(z1, z2)`.
//!
//! Every system shares one of two coefficient matrices:
//!
//! ```text
//! Co1(z)_{kl}      = Q2_{kl} α_k M_k(z)  / z  − δ_{kl} / (z  M_k(z))
//! Co2(z1, z2)_{kl} = Q2_{kl} α_k M_k(z2) / z1 − δ_{kl} / (z1 M_k(z1))
//! ```
//!
//! Third cumulants contribute nothing in the limit and are not read here.

use num_complex::Complex64;

use crate::blockmodel::BlockModelParams;
use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, checked_lu, CMatrix, Lu};
use crate::qve::QveSolution;

fn guard_nonzero(sol: &QveSolution) -> Result<()> {
    if sol.m.iter().any(|m| m.norm() == 0.0 || !m.re.is_finite() || !m.im.is_finite()) {
        return Err(Error::ContourTooClose {
            z: sol.z,
            condition: f64::INFINITY,
        });
    }
    Ok(())
}

pub fn co1(params: &BlockModelParams, sol: &QveSolution) -> Result<CMatrix> {
    co2(params, sol, sol)
}

/// `Co2(z1, z2)`; equals `Co1(z1)` when both solutions coincide.
pub fn co2(params: &BlockModelParams, s1: &QveSolution, s2: &QveSolution) -> Result<CMatrix> {
    guard_nonzero(s1)?;
    guard_nonzero(s2)?;
    let (q2, alpha) = (params.q2(), params.alpha());
    let z1 = s1.z;
    let inv_z1 = z1.inv();
    Ok(CMatrix::from_fn(params.k(), |k, l| {
        let mut v = s2.m[k] * (q2.get(k, l) * alpha[k]) * inv_z1;
        if k == l {
            v -= (z1 * s1.m[k]).inv();
        }
        v
    }))
}

/// `X(z)` from the linear system `Co1(z) X = -(1/z) Diag(α ∘ M(z))`.
pub fn gtgt_matrix(params: &BlockModelParams, sol: &QveSolution) -> Result<CMatrix> {
    g1tg2t_matrix(params, sol, sol)
}

/// `X̃(z1, z2)` from `Co2(z1, z2) X̃ = -(1/z1) Diag(α ∘ M(z2))`.
pub fn g1tg2t_matrix(params: &BlockModelParams, s1: &QveSolution, s2: &QveSolution) -> Result<CMatrix> {
    let lu = checked_lu(&co2(params, s1, s2)?, s1.z)?;
    let scale = -s1.z.inv();
    let rhs: Vec<Complex64> = s2
        .m
        .iter()
        .zip(params.alpha())
        .map(|(m, a)| m * *a * scale)
        .collect();
    Ok(lu.solve_matrix(&CMatrix::diagonal(&rhs)))
}

/// Explicit inverse `X = -(Q2 - Diag(1 / (α_l M_l²)))⁻¹`.
pub fn gtgt_closed_form(params: &BlockModelParams, sol: &QveSolution) -> Result<CMatrix> {
    g1tg2t_closed_form(params, sol, sol)
}

/// Explicit inverse `X̃ = -(Q2 - Diag(1 / (α_l M_l(z1) M_l(z2))))⁻¹`.
pub fn g1tg2t_closed_form(
    params: &BlockModelParams,
    s1: &QveSolution,
    s2: &QveSolution,
) -> Result<CMatrix> {
    guard_nonzero(s1)?;
    guard_nonzero(s2)?;
    let (q2, alpha) = (params.q2(), params.alpha());
    let a = CMatrix::from_fn(params.k(), |k, l| {
        let mut v = Complex64::new(q2.get(k, l), 0.0);
        if k == l {
            v -= (s1.m[k] * s2.m[k] * alpha[k]).inv();
        }
        v
    });
    Ok(checked_inverse(&a, s1.z)?.scale(Complex64::new(-1.0, 0.0)))
}

/// Right-hand side of the mean system, split so the fourth-cumulant part can
/// be inspected on its own.
#[derive(Clone, Debug)]
pub struct MeanRhs {
    pub second_order: Vec<Complex64>,
    pub fourth_cumulant: Vec<Complex64>,
}

impl MeanRhs {
    pub fn total(&self) -> Vec<Complex64> {
        self.second_order
            .iter()
            .zip(&self.fourth_cumulant)
            .map(|(a, b)| a + b)
            .collect()
    }
}

pub fn mean_rhs(params: &BlockModelParams, sol: &QveSolution, x: &CMatrix) -> MeanRhs {
    let k = params.k();
    let (q2, q4, alpha) = (params.q2(), params.q4(), params.alpha());
    let z = sol.z;
    let inv_z = z.inv();
    let m2: Vec<Complex64> = sol.m.iter().map(|m| m * m).collect();
    let second_order = (0..k)
        .map(|l| {
            let q2x: Complex64 = (0..k).map(|j| x[(j, l)] * q2.get(l, j)).sum();
            -q2x * inv_z + m2[l] * (2.0 * alpha[l] * q2.get(l, l)) * inv_z
        })
        .collect();
    let fourth_cumulant = (0..k)
        .map(|l| {
            let s: Complex64 = (0..k)
                .map(|j| m2[l] * m2[j] * (q4.get(l, j) * alpha[l] * alpha[j]))
                .sum();
            -s * inv_z
        })
        .collect();
    MeanRhs {
        second_order,
        fourth_cumulant,
    }
}

/// `Y(z)` solving `Co1(z) Y = -(1/z) diag(Q2 X) + (2/z)[α_k Q2_kk M_k²]
/// - (1/z) diag(Q4 (α_l α_m M_l² M_m²))`.
pub fn mean_vector(params: &BlockModelParams, sol: &QveSolution, x: &CMatrix) -> Result<Vec<Complex64>> {
    let lu = checked_lu(&co1(params, sol)?, sol.z)?;
    Ok(lu.solve(&mean_rhs(params, sol, x).total()))
}

/// `Mean(z) = Σ_k Y_k(z)`.
pub fn mean_kernel(params: &BlockModelParams, sol: &QveSolution) -> Result<Complex64> {
    let x = gtgt_matrix(params, sol)?;
    Ok(mean_vector(params, sol, &x)?.iter().sum())
}

/// K×K×K tensor `W[l][m][r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WTensor {
    k: usize,
    data: Vec<Complex64>,
}

impl WTensor {
    pub fn dim(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, l: usize, m: usize, r: usize) -> Complex64 {
        self.data[(l * self.k + m) * self.k + r]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Right-hand side `b_r = -Σ_k Q2_{rk} X̃_{lk} X_{mr}(z2) - δ_{rl} X_{lm}(z2)`
/// of the `(l, m)` slice of the W system.
pub fn w_rhs(params: &BlockModelParams, x2: &CMatrix, xt: &CMatrix, l: usize, m: usize) -> Vec<Complex64> {
    let k = params.k();
    let q2 = params.q2();
    (0..k)
        .map(|r| {
            let s: Complex64 = (0..k).map(|j| xt[(l, j)] * q2.get(r, j)).sum();
            let mut v = -s * x2[(m, r)];
            if r == l {
                v -= x2[(l, m)];
            }
            v
        })
        .collect()
}

/// Solves `z1 Co2(z1, z2) W̃^{(l,m)} = b^{(l,m)}` for all `(l, m)`, reusing one
/// factorization.
pub fn w_tensor(
    params: &BlockModelParams,
    s1: &QveSolution,
    s2: &QveSolution,
    x2: &CMatrix,
    xt: &CMatrix,
) -> Result<WTensor> {
    let lu = checked_lu(&co2(params, s1, s2)?.scale(s1.z), s1.z)?;
    Ok(w_tensor_with(params, &lu, x2, xt))
}

fn w_tensor_with(params: &BlockModelParams, z1_co2: &Lu, x2: &CMatrix, xt: &CMatrix) -> WTensor {
    let k = params.k();
    let mut data = Vec::with_capacity(k * k * k);
    for l in 0..k {
        for m in 0..k {
            let mut b = w_rhs(params, x2, xt, l, m);
            z1_co2.solve_in_place(&mut b);
            data.extend(b);
        }
    }
    WTensor { k, data }
}

fn cov_rhs(params: &BlockModelParams, s1: &QveSolution, s2: &QveSolution, x2: &CMatrix, w: &WTensor) -> CMatrix {
    let k = params.k();
    let (q2, q4, alpha) = (params.q2(), params.q4(), params.alpha());
    let (m1, m2) = (&s1.m, &s2.m);
    CMatrix::from_fn(k, |l, m| {
        let mut v = Complex64::new(0.0, 0.0);
        for j in 0..k {
            v -= w.get(l, m, j) * (2.0 * q2.get(l, j));
        }
        v += m1[l] * x2[(l, m)] * (2.0 * q2.get(l, l));
        for j in 0..k {
            let q = q4.get(l, j);
            if q != 0.0 {
                v -= m1[l] * m1[j] * m2[j] * x2[(l, m)] * (q * alpha[j]);
                v -= m1[l] * m1[j] * m2[l] * x2[(j, m)] * (q * alpha[l]);
            }
        }
        v
    })
}

/// Solves `z1 (Co1(z1) Z)_{lm} = R_{lm}` and returns `(Z, Σ_{lm} Z_{lm})`.
pub fn cov_kernel(
    params: &BlockModelParams,
    s1: &QveSolution,
    s2: &QveSolution,
    x2: &CMatrix,
    w: &WTensor,
) -> Result<(CMatrix, Complex64)> {
    let lu = checked_lu(&co1(params, s1)?.scale(s1.z), s1.z)?;
    let z = lu.solve_matrix(&cov_rhs(params, s1, s2, x2, w));
    let total = z.sum();
    Ok((z, total))
}

/// Every kernel object at one `(z1, z2)` pair.
#[derive(Clone, Debug)]
pub struct KernelMatrices {
    pub z1: Complex64,
    pub z2: Complex64,
    pub co1_z1: CMatrix,
    pub co1_z2: CMatrix,
    pub co2: CMatrix,
    pub x_z1: CMatrix,
    pub x_z2: CMatrix,
    pub xtilde: CMatrix,
    pub w: WTensor,
    /// Mean system solution at `z1`.
    pub y_z1: Vec<Complex64>,
    pub z: CMatrix,
    pub cov: Complex64,
}

impl KernelMatrices {
    pub fn assemble(params: &BlockModelParams, s1: &QveSolution, s2: &QveSolution) -> Result<Self> {
        let co1_z1 = co1(params, s1)?;
        let co1_z2 = co1(params, s2)?;
        let co2m = co2(params, s1, s2)?;
        let x_z1 = gtgt_matrix(params, s1)?;
        let x_z2 = gtgt_matrix(params, s2)?;
        let xtilde = g1tg2t_matrix(params, s1, s2)?;
        let w = w_tensor(params, s1, s2, &x_z2, &xtilde)?;
        let y_z1 = mean_vector(params, s1, &x_z1)?;
        let (z, cov) = cov_kernel(params, s1, s2, &x_z2, &w)?;
        Ok(Self {
            z1: s1.z,
            z2: s2.z,
            co1_z1,
            co1_z2,
            co2: co2m,
            x_z1,
            x_z2,
            xtilde,
            w,
            y_z1,
            z,
            cov,
        })
    }

    pub fn mean(&self) -> Complex64 {
        self.y_z1.iter().sum()
    }
}

/// Per-node data reused across all pairs that share a node: the QVE
/// solution, the factorization of `z Co1(z)` and `X(z)`.
#[derive(Clone, Debug)]
pub struct NodeKernel {
    pub sol: QveSolution,
    z_co1: Lu,
    pub x: CMatrix,
    pub mean: Complex64,
}

impl NodeKernel {
    pub fn new(params: &BlockModelParams, sol: QveSolution) -> Result<Self> {
        let c1 = co1(params, &sol)?;
        let z_co1 = checked_lu(&c1.scale(sol.z), sol.z)?;
        let x = gtgt_matrix(params, &sol)?;
        let mean = mean_vector(params, &sol, &x)?.iter().sum();
        Ok(Self { sol, z_co1, x, mean })
    }

    pub fn z(&self) -> Complex64 {
        self.sol.z
    }
}

/// `Cov(z1, z2)` from cached node data; the same value as [`cov_kernel`].
pub fn pair_cov(params: &BlockModelParams, n1: &NodeKernel, n2: &NodeKernel) -> Result<Complex64> {
    let (s1, s2) = (&n1.sol, &n2.sol);
    let c2 = co2(params, s1, s2)?;
    let lu2 = checked_lu(&c2, s1.z)?;
    let scale = -s1.z.inv();
    let diag: Vec<Complex64> = s2
        .m
        .iter()
        .zip(params.alpha())
        .map(|(m, a)| m * *a * scale)
        .collect();
    let xt = lu2.solve_matrix(&CMatrix::diagonal(&diag));
    // z1 Co2 shares the pivots of Co2; solve with Co2 and divide by z1
    let k = params.k();
    let inv_z1 = s1.z.inv();
    let mut data = Vec::with_capacity(k * k * k);
    for l in 0..k {
        for m in 0..k {
            let mut b = w_rhs(params, &n2.x, &xt, l, m);
            lu2.solve_in_place(&mut b);
            data.extend(b.into_iter().map(|v| v * inv_z1));
        }
    }
    let w = WTensor { k, data };
    let z = n1.z_co1.solve_matrix(&cov_rhs(params, s1, s2, &n2.x, &w));
    Ok(z.sum())
}
