//! Block-Wigner-type model parameters and stochastic block model specs.
//!
//! Communities are contiguous index blocks: node `i` belongs to the first
//! community whose cumulative size exceeds `i`. Proportions `alpha` are always
//! derived from the integer community sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Dense K×K real matrix indexed by community pairs, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct BlockMatrix {
    k: usize,
    data: Vec<f64>,
}

impl BlockMatrix {
    pub fn from_fn(k: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(k * k);
        for r in 0..k {
            for c in 0..k {
                data.push(f(r, c));
            }
        }
        Self { k, data }
    }

    pub fn filled(k: usize, value: f64) -> Self {
        Self::from_fn(k, |_, _| value)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidModel("empty block matrix".into()));
        }
        let mut data = Vec::with_capacity(k * k);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidModel(format!(
                    "block matrix row {r} has {} entries, expected {k}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(Self { k, data })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.k + c]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.k).map(|c| c.to_vec()).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            k: self.k,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    fn first_asymmetry(&self) -> Option<(usize, usize)> {
        for r in 0..self.k {
            for c in (r + 1)..self.k {
                let (a, b) = (self.get(r, c), self.get(c, r));
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Some((r, c));
                }
            }
        }
        None
    }
}

impl TryFrom<Vec<Vec<f64>>> for BlockMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<BlockMatrix> for Vec<Vec<f64>> {
    fn from(m: BlockMatrix) -> Self {
        m.rows()
    }
}

/// Unvalidated model candidate, as read from a model file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBlockModel {
    pub k: usize,
    pub sizes: Vec<usize>,
    pub q2: BlockMatrix,
    pub q3: BlockMatrix,
    pub q4: BlockMatrix,
}

/// Validated parameters of a block-Wigner-type matrix: community sizes and the
/// block-constant 2nd, 3rd and 4th cumulants of `sqrt(n) * H_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockModelParams {
    sizes: Vec<usize>,
    alpha: Vec<f64>,
    q2: BlockMatrix,
    q3: BlockMatrix,
    q4: BlockMatrix,
}

impl BlockModelParams {
    pub fn new(sizes: Vec<usize>, q2: BlockMatrix, q3: BlockMatrix, q4: BlockMatrix) -> Result<Self> {
        validate_params(RawBlockModel {
            k: sizes.len(),
            sizes,
            q2,
            q3,
            q4,
        })
    }

    /// Gaussian-like model: only second cumulants, `Q3 = Q4 = 0`.
    pub fn with_variances(sizes: Vec<usize>, q2: BlockMatrix) -> Result<Self> {
        let k = sizes.len();
        Self::new(sizes, q2, BlockMatrix::filled(k, 0.0), BlockMatrix::filled(k, 0.0))
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn q2(&self) -> &BlockMatrix {
        &self.q2
    }

    pub fn q3(&self) -> &BlockMatrix {
        &self.q3
    }

    pub fn q4(&self) -> &BlockMatrix {
        &self.q4
    }

    /// Same cumulants with community sizes rescaled to total `n`.
    pub fn resized(&self, n: usize) -> Result<Self> {
        let sizes = sizes_from_alpha(&self.alpha, n)?;
        Self::new(sizes, self.q2.clone(), self.q3.clone(), self.q4.clone())
    }

    pub fn to_raw(&self) -> RawBlockModel {
        RawBlockModel {
            k: self.k(),
            sizes: self.sizes.clone(),
            q2: self.q2.clone(),
            q3: self.q3.clone(),
            q4: self.q4.clone(),
        }
    }
}

/// Checks every model invariant and returns the validated parameters, or the
/// first violation found.
pub fn validate_params(raw: RawBlockModel) -> Result<BlockModelParams> {
    let RawBlockModel { k, sizes, q2, q3, q4 } = raw;
    if k == 0 {
        return Err(Error::InvalidModel("K must be positive".into()));
    }
    if sizes.len() != k {
        return Err(Error::InvalidModel(format!(
            "K = {k} but {} community sizes given",
            sizes.len()
        )));
    }
    if let Some(pos) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidModel(format!("community {pos} has size 0")));
    }
    for (name, m) in [("Q2", &q2), ("Q3", &q3), ("Q4", &q4)] {
        if m.dim() != k {
            return Err(Error::InvalidModel(format!(
                "{name} is {}x{0}, expected {k}x{k}",
                m.dim()
            )));
        }
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
        }
        if let Some((r, c)) = m.first_asymmetry() {
            return Err(Error::InvalidModel(format!(
                "{name} not symmetric at ({r},{c}): {} vs {}",
                m.get(r, c),
                m.get(c, r)
            )));
        }
    }
    for r in 0..k {
        for c in 0..k {
            if q2.get(r, c) <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "Q2[{r}][{c}] = {} must be positive",
                    q2.get(r, c)
                )));
            }
        }
    }
    let n: usize = sizes.iter().sum();
    let alpha: Vec<f64> = sizes.iter().map(|&s| s as f64 / n as f64).collect();
    let total: f64 = alpha.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidModel(format!("proportions sum to {total}, not 1")));
    }
    if k > 1 && alpha.iter().any(|&a| a <= 0.0 || a >= 1.0) {
        return Err(Error::InvalidModel("proportions must lie in (0,1)".into()));
    }
    Ok(BlockModelParams {
        sizes,
        alpha,
        q2,
        q3,
        q4,
    })
}

/// Community (0-based) of node `i` under the contiguous block layout.
pub fn community_of(i: usize, sizes: &[usize]) -> Result<usize> {
    let mut upper = 0;
    for (k, &s) in sizes.iter().enumerate() {
        upper += s;
        if i < upper {
            return Ok(k);
        }
    }
    Err(Error::IndexOutOfRange { index: i, n: upper })
}

/// Membership vector `sigma` for all nodes.
pub fn memberships(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
        .collect()
}

/// Integer community sizes summing to `n` that best match `alpha`
/// (largest-remainder rounding, ties broken by community index).
pub fn sizes_from_alpha(alpha: &[f64], n: usize) -> Result<Vec<usize>> {
    if alpha.is_empty() || alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidModel("proportions must be positive".into()));
    }
    let total: f64 = alpha.iter().sum();
    let exact: Vec<f64> = alpha.iter().map(|a| a / total * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut missing = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..alpha.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        sizes[k] += 1;
        missing -= 1;
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidModel(format!(
            "n = {n} too small for proportions {alpha:?}"
        )));
    }
    Ok(sizes)
}

/// Cumulants (κ2, κ3, κ4) of `A - p` for `A ~ Bernoulli(p)`.
pub fn centered_bernoulli_cumulants(p: f64) -> (f64, f64, f64) {
    let v = p * (1.0 - p);
    (v, v * (1.0 - 2.0 * p), v * (1.0 - 6.0 * v))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSbmSpec {
    pub k: usize,
    pub sizes: Vec<usize>,
    pub ptilde: BlockMatrix,
}

/// Stochastic block model: community sizes and block connection probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmSpec {
    sizes: Vec<usize>,
    ptilde: BlockMatrix,
}

impl SbmSpec {
    pub fn new(sizes: Vec<usize>, ptilde: BlockMatrix) -> Result<Self> {
        Self::from_raw(RawSbmSpec {
            k: sizes.len(),
            sizes,
            ptilde,
        })
    }

    pub fn from_raw(raw: RawSbmSpec) -> Result<Self> {
        let RawSbmSpec { k, sizes, ptilde } = raw;
        if k == 0 || sizes.len() != k {
            return Err(Error::InvalidModel(format!(
                "K = {k} but {} community sizes given",
                sizes.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidModel("community sizes must be positive".into()));
        }
        if ptilde.dim() != k {
            return Err(Error::InvalidModel(format!(
                "Ptilde is {}x{0}, expected {k}x{k}",
                ptilde.dim()
            )));
        }
        if let Some((r, c)) = ptilde.first_asymmetry() {
            return Err(Error::InvalidModel(format!("Ptilde not symmetric at ({r},{c})")));
        }
        if let Some(bad) = ptilde.data.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidModel(format!(
                "connection probability {bad} outside (0,1)"
            )));
        }
        Ok(Self { sizes, ptilde })
    }

    /// Planted-partition probabilities: `p` within communities, `q` across.
    pub fn planted(sizes: Vec<usize>, p: f64, q: f64) -> Result<Self> {
        let k = sizes.len();
        Self::new(sizes, BlockMatrix::from_fn(k, |r, c| if r == c { p } else { q }))
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn ptilde(&self) -> &BlockMatrix {
        &self.ptilde
    }

    pub fn to_raw(&self) -> RawSbmSpec {
        RawSbmSpec {
            k: self.k(),
            sizes: self.sizes.clone(),
            ptilde: self.ptilde.clone(),
        }
    }
}

/// Block-Wigner parameters of `H = (A - p) / sqrt(n)`: the cumulants of a
/// centered Bernoulli variable in each block.
pub fn sbm_to_block_params(spec: &SbmSpec) -> BlockModelParams {
    let k = spec.k();
    let cum = |r: usize, c: usize| centered_bernoulli_cumulants(spec.ptilde.get(r, c));
    let q2 = BlockMatrix::from_fn(k, |r, c| cum(r, c).0);
    let q3 = BlockMatrix::from_fn(k, |r, c| cum(r, c).1);
    let q4 = BlockMatrix::from_fn(k, |r, c| cum(r, c).2);
    BlockModelParams::new(spec.sizes.clone(), q2, q3, q4)
        .expect("cumulants of a valid SBM always form valid block parameters")
}

/// Either kind of model file.
#[derive(Clone, Debug)]
pub enum Model {
    Block(BlockModelParams),
    Sbm(SbmSpec),
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum RawModel {
    Sbm(RawSbmSpec),
    Block(RawBlockModel),
}

impl Model {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawModel = serde_json::from_str(text)
            .map_err(|e| Error::InvalidModel(format!("model file: {e}")))?;
        match raw {
            RawModel::Sbm(s) => Ok(Model::Sbm(SbmSpec::from_raw(s)?)),
            RawModel::Block(b) => Ok(Model::Block(validate_params(b)?)),
        }
    }

    pub fn to_json(&self) -> String {
        let raw = match self {
            Model::Block(p) => RawModel::Block(p.to_raw()),
            Model::Sbm(s) => RawModel::Sbm(s.to_raw()),
        };
        serde_json::to_string_pretty(&raw).expect("model serializes")
    }

    pub fn params(&self) -> BlockModelParams {
        match self {
            Model::Block(p) => p.clone(),
            Model::Sbm(s) => sbm_to_block_params(s),
        }
    }

    pub fn sbm(&self) -> Option<&SbmSpec> {
        match self {
            Model::Sbm(s) => Some(s),
            Model::Block(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> RawBlockModel {
        RawBlockModel {
            k: 1,
            sizes: vec![10],
            q2: BlockMatrix::filled(1, 1.0),
            q3: BlockMatrix::filled(1, 0.0),
            q4: BlockMatrix::filled(1, 0.0),
        }
    }

    /// Raw moments of `A - p` by enumerating the two outcomes, then the
    /// standard moment-to-cumulant relations for a mean-zero variable.
    fn enumerated_cumulants(p: f64) -> (f64, f64, f64) {
        // (value, probability)
        let outcomes = [(1.0 - p, p), (-p, 1.0 - p)];
        let moment = |a: i32| outcomes.iter().map(|(x, w)| w * x.powi(a)).sum::<f64>();
        let (m2, m3, m4) = (moment(2), moment(3), moment(4));
        (m2, m3, m4 - 3.0 * m2 * m2)
    }

    #[test]
    fn minimal_model_is_accepted() {
        let p = validate_params(unit()).unwrap();
        assert_eq!(p.k(), 1);
        assert_eq!(p.alpha(), &[1.0]);
    }

    #[test]
    fn asymmetric_q2_rejected() {
        let raw = RawBlockModel {
            k: 2,
            sizes: vec![5, 5],
            q2: BlockMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap(),
            q3: BlockMatrix::filled(2, 0.0),
            q4: BlockMatrix::filled(2, 0.0),
        };
        let err = validate_params(raw).unwrap_err().to_string();
        assert!(err.contains("Q2 not symmetric"), "{err}");
    }

    #[test]
    fn nonpositive_q2_rejected() {
        let mut raw = unit();
        raw.q2 = BlockMatrix::filled(1, 0.0);
        assert!(validate_params(raw).unwrap_err().to_string().contains("positive"));
    }

    #[test]
    fn size_count_mismatch_rejected() {
        let mut raw = unit();
        raw.k = 2;
        assert!(validate_params(raw).is_err());
    }

    #[test]
    fn planted_grid_models_are_valid() {
        for i in 1..=9 {
            for j in 1..=9 {
                let spec = SbmSpec::planted(vec![200, 200, 400], i as f64 / 10.0, j as f64 / 10.0)
                    .unwrap();
                let params = sbm_to_block_params(&spec);
                assert_eq!(params.alpha(), &[0.25, 0.25, 0.5]);
            }
        }
    }

    #[test]
    fn community_lookup() {
        let sizes = [2, 3];
        assert_eq!(community_of(0, &sizes).unwrap(), 0);
        assert_eq!(community_of(2, &sizes).unwrap(), 1);
        assert_eq!(community_of(4, &sizes).unwrap(), 1);
        assert!(matches!(
            community_of(5, &sizes),
            Err(Error::IndexOutOfRange { index: 5, n: 5 })
        ));
    }

    #[test]
    fn bernoulli_cumulant_examples() {
        let (k2, k3, k4) = enumerated_cumulants(0.5);
        assert!((k2 - 0.25).abs() < 1e-15 && k3.abs() < 1e-15 && (k4 + 0.125).abs() < 1e-15);
        let (k2, k3, k4) = enumerated_cumulants(0.1);
        assert!((k2 - 0.09).abs() < 1e-15);
        assert!((k3 - 0.072).abs() < 1e-15);
        assert!((k4 - 0.0414).abs() < 1e-15);

        let a = centered_bernoulli_cumulants(0.3);
        let b = centered_bernoulli_cumulants(0.7);
        assert!((a.0 - b.0).abs() < 1e-15);
        assert!((a.1 + b.1).abs() < 1e-15);
        assert!((a.2 - b.2).abs() < 1e-15);
    }

    #[test]
    fn extreme_probabilities_rejected() {
        assert!(SbmSpec::planted(vec![3, 3], 1.0, 0.5).is_err());
        assert!(SbmSpec::planted(vec![3, 3], 0.5, 0.0).is_err());
    }

    #[test]
    fn model_json_both_kinds() {
        let block = r#"{"k":1,"sizes":[10],"q2":[[1.0]],"q3":[[0.0]],"q4":[[0.0]]}"#;
        let m = Model::from_json(block).unwrap();
        assert!(m.sbm().is_none());
        assert_eq!(m.params().n(), 10);

        let sbm = r#"{"k":2,"sizes":[3,5],"ptilde":[[0.5,0.2],[0.2,0.4]]}"#;
        let m = Model::from_json(sbm).unwrap();
        assert_eq!(m.sbm().unwrap().n(), 8);
        let back = Model::from_json(&m.to_json()).unwrap();
        assert_eq!(back.sbm(), m.sbm());

        let bad = r#"{"k":2,"sizes":[3,5],"q2":[[1,2],[3,1]],"q3":[[0,0],[0,0]],"q4":[[0,0],[0,0]]}"#;
        assert!(Model::from_json(bad).is_err());
    }

    #[test]
    fn sizes_from_alpha_rounds_to_total() {
        assert_eq!(sizes_from_alpha(&[0.25, 0.25, 0.5], 400).unwrap(), vec![100, 100, 200]);
        assert_eq!(
            sizes_from_alpha(&[0.1, 0.15, 0.2, 0.25, 0.1, 0.2], 500).unwrap(),
            vec![50, 75, 100, 125, 50, 100]
        );
        assert_eq!(sizes_from_alpha(&[1.0, 1.0, 1.0], 10).unwrap().iter().sum::<usize>(), 10);
    }

    proptest! {
        #[test]
        fn cumulants_match_enumeration(p in 0.001f64..0.999) {
            let (a2, a3, a4) = centered_bernoulli_cumulants(p);
            let (b2, b3, b4) = enumerated_cumulants(p);
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
            prop_assert!(rel(a2, b2) < 1e-12);
            prop_assert!((a3 - b3).abs() < 1e-12 * b2);
            prop_assert!((a4 - b4).abs() < 1e-12 * b2);
        }

        #[test]
        fn sbm_params_always_valid(ps in proptest::collection::vec(0.01f64..0.99, 6)) {
            // upper triangle of a 3x3 matrix, row-major
            let idx = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
            let pt = BlockMatrix::from_fn(3, |r, c| ps[idx[r][c]]);
            let spec = SbmSpec::new(vec![4, 5, 6], pt).unwrap();
            let params = sbm_to_block_params(&spec);
            prop_assert!(validate_params(params.to_raw()).is_ok());
        }

        #[test]
        fn community_of_is_monotone_partition(sizes in proptest::collection::vec(1usize..7, 1..5)) {
            let n: usize = sizes.iter().sum();
            let mut counts = vec![0usize; sizes.len()];
            let mut last = 0;
            for i in 0..n {
                let k = community_of(i, &sizes).unwrap();
                prop_assert!(k >= last);
                last = k;
                counts[k] += 1;
            }
            prop_assert_eq!(counts, sizes.clone());
            prop_assert!(community_of(n, &sizes).is_err());
            prop_assert_eq!(memberships(&sizes).len(), n);
        }
    }
}
