//! Circular contours around the limiting spectrum and periodic trapezoid
//! quadrature of the CLT kernels.
//!
//! ```text
//! M(f)      = -1/(2πi)  ∮ Mean(z) f(z) dz
//! V(f, g)   = -1/(4π²)  ∮∮ f(z1) g(z2) Cov(z1, z2) dz1 dz2
//! ∫ f dμ∞   = -1/(2πi)  ∮ f(z) Σ_l α_l M_l(z) dz
//! ```
//!
//! The integrands are analytic in an annulus around the circle, so the
//! trapezoid rule converges geometrically. Convergence is checked by comparing
//! the N-node rule with the N/2-node rule on every other node, which costs no
//! extra kernel evaluations; the node count doubles until they agree.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::blockmodel::BlockModelParams;
use crate::error::{Error, Result};
use crate::kernels::{pair_cov, NodeKernel};
use crate::qve::{solve_qve, spectral_edge};
use crate::testfn::TestFunction;

pub const DEFAULT_NODES: usize = 512;
pub const MIN_NODES: usize = 64;
pub const MAX_NODES: usize = 4096;
pub const MAX_RADIUS_ATTEMPTS: usize = 8;
/// Agreement required between the N and N/2 rules, relative to `max(1, |value|)`.
pub const CONVERGENCE_TOL: f64 = 1e-8;
/// Largest imaginary part tolerated before it is discarded, same scaling.
pub const IMAG_TOL: f64 = 1e-8;

const RADIUS_GROWTH: f64 = 1.25;

/// Circle centred at 0 with `N` equally spaced nodes at angles
/// `2π(j + ½)/N` (off the real axis, closed under conjugation) and trapezoid
/// weights `dz_j = i z_j 2π/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourQuadrature {
    radius: f64,
    nodes: Vec<Complex64>,
    tangents: Vec<Complex64>,
}

impl ContourQuadrature {
    pub fn circle(radius: f64, n: usize) -> Self {
        let step = 2.0 * PI / n as f64;
        let nodes: Vec<Complex64> = (0..n)
            .map(|j| Complex64::from_polar(radius, step * (j as f64 + 0.5)))
            .collect();
        let tangents = nodes.iter().map(|z| Complex64::new(0.0, step) * z).collect();
        Self {
            radius,
            nodes,
            tangents,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn tangents(&self) -> &[Complex64] {
        &self.tangents
    }

    pub fn with_nodes(&self, n: usize) -> Self {
        Self::circle(self.radius, n)
    }
}

fn check_node_count(n: usize) -> Result<()> {
    if n < MIN_NODES || !n.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "node count must be a power of two >= {MIN_NODES}, got {n}"
        )));
    }
    Ok(())
}

fn node_kernels(params: &BlockModelParams, contour: &ContourQuadrature) -> Result<Vec<NodeKernel>> {
    contour
        .nodes()
        .par_iter()
        .map(|&z| NodeKernel::new(params, solve_qve(params, z)?))
        .collect()
}

fn build_with_kernels(
    params: &BlockModelParams,
    n_nodes: usize,
    safety: f64,
) -> Result<(ContourQuadrature, Vec<NodeKernel>)> {
    check_node_count(n_nodes)?;
    if !(safety >= 0.0) {
        return Err(Error::InvalidInput(format!("safety must be >= 0, got {safety}")));
    }
    let edge = spectral_edge(params, 0.0).edge;
    let mut radius = (1.2 * edge + 0.5).max(edge + safety);
    for _ in 0..MAX_RADIUS_ATTEMPTS {
        let contour = ContourQuadrature::circle(radius, n_nodes);
        match node_kernels(params, &contour) {
            Ok(k) => return Ok((contour, k)),
            Err(e) if e.is_numerical() => radius *= RADIUS_GROWTH,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ContourNotFound {
        attempts: MAX_RADIUS_ATTEMPTS,
        radius: radius / RADIUS_GROWTH,
    })
}

/// Circle of radius `max(1.2 edge + 0.5, edge + safety)`, grown by 25% until
/// every node's kernel systems pass the conditioning check.
pub fn build_contour(params: &BlockModelParams, n_nodes: usize, safety: f64) -> Result<ContourQuadrature> {
    build_with_kernels(params, n_nodes, safety).map(|(c, _)| c)
}

/// Kernel data on a fixed contour: per-node mean kernel and Stieltjes
/// transform, and the lazily computed `N × N` covariance kernel grid.
pub struct KernelGrid {
    params: BlockModelParams,
    contour: ContourQuadrature,
    nodes: Vec<NodeKernel>,
    cov: OnceLock<Result<Vec<Complex64>>>,
}

impl KernelGrid {
    pub fn new(params: &BlockModelParams, contour: &ContourQuadrature) -> Result<Self> {
        let nodes = node_kernels(params, contour)?;
        Ok(Self::from_parts(params, contour.clone(), nodes))
    }

    fn from_parts(params: &BlockModelParams, contour: ContourQuadrature, nodes: Vec<NodeKernel>) -> Self {
        Self {
            params: params.clone(),
            contour,
            nodes,
            cov: OnceLock::new(),
        }
    }

    pub fn contour(&self) -> &ContourQuadrature {
        &self.contour
    }

    pub fn node_kernels(&self) -> &[NodeKernel] {
        &self.nodes
    }

    /// Row-major `Cov(z_j, z_k)` over all node pairs.
    pub fn cov_grid(&self) -> Result<&[Complex64]> {
        let grid = self.cov.get_or_init(|| {
            let rows: Result<Vec<Vec<Complex64>>> = self
                .nodes
                .par_iter()
                .map(|a| self.nodes.iter().map(|b| pair_cov(&self.params, a, b)).collect())
                .collect();
            rows.map(|r| r.concat())
        });
        match grid {
            Ok(g) => Ok(g),
            Err(e) => Err(Error::Quadrature(format!("covariance kernel grid: {e}"))),
        }
    }

    /// `-1/(2πi) Σ_j h(z_j) dz_j` over nodes `j ≡ 0 (mod stride)`.
    fn contour_sum(&self, stride: usize, h: impl Fn(usize) -> Complex64) -> Complex64 {
        let tangents = self.contour.tangents();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in (0..self.nodes.len()).step_by(stride) {
            acc += h(j) * tangents[j] * stride as f64;
        }
        acc / Complex64::new(0.0, -2.0 * PI)
    }

    pub fn mean_at(&self, f: &TestFunction, stride: usize) -> Complex64 {
        self.contour_sum(stride, |j| self.nodes[j].mean * f.eval(self.nodes[j].z()))
    }

    pub fn lsd_integral_at(&self, f: &TestFunction, stride: usize) -> Complex64 {
        let alpha = self.params.alpha();
        self.contour_sum(stride, |j| self.nodes[j].sol.stieltjes(alpha) * f.eval(self.nodes[j].z()))
    }

    pub fn cov_at(&self, f: &TestFunction, g: &TestFunction, stride: usize) -> Result<Complex64> {
        let grid = self.cov_grid()?;
        let n = self.nodes.len();
        let tangents = self.contour.tangents();
        let weight = stride as f64;
        let gw: Vec<Complex64> = (0..n)
            .map(|k| g.eval(self.nodes[k].z()) * tangents[k] * weight)
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in (0..n).step_by(stride) {
            let row = &grid[j * n..(j + 1) * n];
            let mut inner = Complex64::new(0.0, 0.0);
            for k in (0..n).step_by(stride) {
                inner += row[k] * gw[k];
            }
            acc += inner * f.eval(self.nodes[j].z()) * tangents[j] * weight;
        }
        Ok(acc * (-1.0 / (4.0 * PI * PI)))
    }
}

/// Result of an adaptively converged contour integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Imaginary part discarded after the reality check.
    pub imag: f64,
    /// `|I(N) - I(N/2)|`.
    pub convergence: f64,
    pub nodes_used: usize,
    pub radius: f64,
}

fn scale_of(v: Complex64) -> f64 {
    v.norm().max(1.0)
}

/// Builds the contour once, then integrates kernels, doubling the node count
/// until the N and N/2 rules agree (up to [`MAX_NODES`]).
pub struct LssAsymptotics {
    params: BlockModelParams,
    grids: Vec<KernelGrid>,
}

impl LssAsymptotics {
    pub fn new(params: &BlockModelParams, n_nodes: usize, safety: f64) -> Result<Self> {
        let (contour, nodes) = build_with_kernels(params, n_nodes, safety)?;
        Ok(Self {
            params: params.clone(),
            grids: vec![KernelGrid::from_parts(params, contour, nodes)],
        })
    }

    /// Uses `contour` as given, without the conditioning search.
    pub fn on_contour(params: &BlockModelParams, contour: &ContourQuadrature) -> Result<Self> {
        check_node_count(contour.len())?;
        Ok(Self {
            params: params.clone(),
            grids: vec![KernelGrid::new(params, contour)?],
        })
    }

    pub fn params(&self) -> &BlockModelParams {
        &self.params
    }

    pub fn radius(&self) -> f64 {
        self.grids[0].contour.radius()
    }

    /// The finest grid built so far.
    pub fn grid(&self) -> &KernelGrid {
        self.grids.last().expect("at least one grid")
    }

    fn grid_with(&mut self, level: usize) -> Result<&KernelGrid> {
        while self.grids.len() <= level {
            let next = self.grid().contour.with_nodes(self.grid().contour.len() * 2);
            let grid = KernelGrid::new(&self.params, &next)?;
            self.grids.push(grid);
        }
        Ok(&self.grids[level])
    }

    fn converge(
        &mut self,
        what: &str,
        eval: impl Fn(&KernelGrid, usize) -> Result<Complex64>,
    ) -> Result<Integral> {
        let mut level = 0;
        loop {
            let grid = self.grid_with(level)?;
            let full = eval(grid, 1)?;
            let half = eval(grid, 2)?;
            let convergence = (full - half).norm();
            let nodes_used = grid.contour.len();
            if convergence <= CONVERGENCE_TOL * scale_of(full) {
                if full.im.abs() > IMAG_TOL * scale_of(full) {
                    return Err(Error::Quadrature(format!(
                        "{what}: imaginary residual {:e} exceeds tolerance",
                        full.im
                    )));
                }
                return Ok(Integral {
                    value: full.re,
                    imag: full.im,
                    convergence,
                    nodes_used,
                    radius: grid.contour.radius(),
                });
            }
            if nodes_used * 2 > MAX_NODES {
                return Err(Error::Quadrature(format!(
                    "{what}: not converged at {nodes_used} nodes (|I(N) - I(N/2)| = {convergence:e})"
                )));
            }
            level += 1;
        }
    }

    pub fn mean(&mut self, f: &TestFunction) -> Result<Integral> {
        self.converge("mean", |g, s| Ok(g.mean_at(f, s)))
    }

    pub fn covariance(&mut self, f: &TestFunction, g: &TestFunction) -> Result<Integral> {
        self.converge("covariance", |grid, s| grid.cov_at(f, g, s))
    }

    pub fn lsd_integral(&mut self, f: &TestFunction) -> Result<Integral> {
        self.converge("lsd integral", |g, s| Ok(g.lsd_integral_at(f, s)))
    }
}

/// CLT mean `M(f)`.
pub fn mean_lss(f: &TestFunction, params: &BlockModelParams, contour: &ContourQuadrature) -> Result<f64> {
    Ok(LssAsymptotics::on_contour(params, contour)?.mean(f)?.value)
}

/// CLT covariance `V(f, g)`.
pub fn cov_lss(
    f: &TestFunction,
    g: &TestFunction,
    params: &BlockModelParams,
    contour: &ContourQuadrature,
) -> Result<f64> {
    Ok(LssAsymptotics::on_contour(params, contour)?.covariance(f, g)?.value)
}

/// `∫ f dμ∞`, the per-eigenvalue centering.
pub fn lsd_integral(f: &TestFunction, params: &BlockModelParams, contour: &ContourQuadrature) -> Result<f64> {
    Ok(LssAsymptotics::on_contour(params, contour)?.lsd_integral(f)?.value)
}
