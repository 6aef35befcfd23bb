//! Theory tables, grid sweeps, comparisons and qq data, with their CSV and
//! JSON encodings. All CSV files start with the schema line [`CSV_HEADER`].

use std::fmt::Write as _;

use serde::Serialize;

use crate::blockmodel::{sbm_to_block_params, BlockModelParams, SbmSpec};
use crate::contour::LssAsymptotics;
use crate::error::{Error, Result};
use crate::simulate::stats::{max_qq_deviation, mean_and_variance, qq_points, qq_two_sample, QqPoint};
use crate::simulate::{monte_carlo_many, summarize, two_sample_ks, LssSampleSet, Renormalization};
use crate::testfn::TestFunction;

pub const CSV_HEADER: &str = "# spectral-clt v1";

/// Asymptotic quantities for one test function.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryRow {
    pub f: String,
    /// `M(f)`.
    pub mean: f64,
    /// `V(f, f)`.
    pub variance: f64,
    /// `∫ f dμ∞`; the raw statistic `Σ f(λ_i)` is centered by `n` times this.
    pub centering: f64,
    pub nodes_used: usize,
    pub radius: f64,
}

impl TheoryRow {
    /// Limiting mean of the uncentered `Σ_i f(λ_i)` at size `n`.
    pub fn raw_mean(&self, n: usize) -> f64 {
        n as f64 * self.centering + self.mean
    }
}

pub fn theory_row(asym: &mut LssAsymptotics, f: &TestFunction) -> Result<TheoryRow> {
    let mean = asym.mean(f)?;
    let variance = asym.covariance(f, f)?;
    let centering = asym.lsd_integral(f)?;
    Ok(TheoryRow {
        f: f.to_string(),
        mean: mean.value,
        variance: variance.value,
        centering: centering.value,
        nodes_used: mean.nodes_used.max(variance.nodes_used).max(centering.nodes_used),
        radius: mean.radius,
    })
}

pub fn run_theory(params: &BlockModelParams, fs: &[TestFunction], nodes: usize) -> Result<Vec<TheoryRow>> {
    let mut asym = LssAsymptotics::new(params, nodes, 0.0)?;
    fs.iter().map(|f| theory_row(&mut asym, f)).collect()
}

pub fn theory_csv(rows: &[TheoryRow]) -> String {
    let mut s = format!("{CSV_HEADER}\nf,mean,variance,centering,nodes_used,radius\n");
    for r in rows {
        writeln!(
            s,
            "\"{}\",{},{},{},{},{}",
            r.f, r.mean, r.variance, r.centering, r.nodes_used, r.radius
        )
        .unwrap();
    }
    s
}

/// Reads back the output of [`theory_csv`].
pub fn parse_theory_csv(text: &str) -> Result<Vec<TheoryRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::InvalidInput(format!("theory file must start with `{CSV_HEADER}`")));
    }
    if lines.next().map(str::trim) != Some("f,mean,variance,centering,nodes_used,radius") {
        return Err(Error::InvalidInput("unexpected theory column header".into()));
    }
    lines
        .map(|line| {
            // the function spec itself may contain commas
            let fields: Vec<&str> = line.trim().rsplitn(6, ',').collect();
            if fields.len() != 6 {
                return Err(Error::InvalidInput(format!("bad theory row `{line}`")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("theory value `{s}`: {e}")))
            };
            let f: TestFunction = fields[5].trim_matches('"').parse()?;
            Ok(TheoryRow {
                f: f.to_string(),
                mean: num(fields[4])?,
                variance: num(fields[3])?,
                centering: num(fields[2])?,
                nodes_used: fields[1]
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("nodes_used `{}`: {e}", fields[1])))?,
                radius: num(fields[0])?,
            })
        })
        .collect()
}

pub fn theory_json(rows: &[TheoryRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
    s.push('\n');
    s
}

/// `Mean(z1)` and `Cov(z1, z2)` over all node pairs of the finest contour
/// built so far.
pub fn kernel_dump_csv(asym: &LssAsymptotics) -> Result<String> {
    let grid = asym.grid();
    let nodes = grid.node_kernels();
    let cov = grid.cov_grid()?;
    let n = nodes.len();
    let mut s = format!("{CSV_HEADER}\nz1_re,z1_im,z2_re,z2_im,mean_re,mean_im,cov_re,cov_im\n");
    for (j, a) in nodes.iter().enumerate() {
        let (z1, mean) = (a.z(), a.mean);
        for (k, b) in nodes.iter().enumerate() {
            let (z2, c) = (b.z(), cov[j * n + k]);
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                z1.re, z1.im, z2.re, z2.im, mean.re, mean.im, c.re, c.im
            )
            .unwrap();
        }
    }
    Ok(s)
}

/// Samples file: schema line, a metadata comment, then `replicate,value`.
pub fn samples_csv(set: &LssSampleSet) -> String {
    let mut s = format!(
        "{CSV_HEADER}\n# n={} which={} f={} seed={}\nreplicate,value\n",
        set.n, set.renormalization, set.f, set.seed
    );
    for (r, v) in set.values.iter().enumerate() {
        writeln!(s, "{r},{v}").unwrap();
    }
    s
}

pub fn parse_samples_csv(text: &str) -> Result<LssSampleSet> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::InvalidInput(format!("samples file must start with `{CSV_HEADER}`")));
    }
    let meta = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::InvalidInput("missing samples metadata line".into()))?;
    let mut n = None;
    let mut which = None;
    let mut f = None;
    let mut seed = None;
    for field in meta.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("bad metadata field `{field}`")))?;
        let bad = |e: &dyn std::fmt::Display| Error::InvalidInput(format!("metadata `{field}`: {e}"));
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
            "which" => which = Some(value.parse::<Renormalization>()?),
            "f" => f = Some(value.parse::<TestFunction>()?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(&e))?),
            _ => return Err(Error::InvalidInput(format!("unknown metadata key `{key}`"))),
        }
    }
    if lines.next().map(str::trim) != Some("replicate,value") {
        return Err(Error::InvalidInput("expected column header `replicate,value`".into()));
    }
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (r, v) = line
            .split_once(',')
            .ok_or_else(|| Error::InvalidInput(format!("bad samples row `{line}`")))?;
        if r.trim().parse::<usize>().ok() != Some(i) {
            return Err(Error::InvalidInput(format!("replicate index out of order at `{line}`")));
        }
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|e| Error::InvalidInput(format!("value `{v}`: {e}")))?;
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite value at replicate {i}")));
        }
        values.push(v);
    }
    let missing = |k: &str| Error::InvalidInput(format!("samples metadata lacks `{k}`"));
    Ok(LssSampleSet {
        label: String::new(),
        n: n.ok_or_else(|| missing("n"))?,
        renormalization: which.ok_or_else(|| missing("which"))?,
        f: f.ok_or_else(|| missing("f"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        values,
    })
}

pub fn qq_csv(points: &[QqPoint]) -> String {
    let mut s = format!("{CSV_HEADER}\ntheoretical_quantile,sample_quantile\n");
    for p in points {
        writeln!(s, "{},{}", p.theoretical, p.sample).unwrap();
    }
    s
}

/// Sample set against its limiting normal law.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub theory_mean: f64,
    pub emp_mean: f64,
    pub theory_var: f64,
    pub emp_var: f64,
    pub abs_diff_mean: f64,
    pub abs_diff_var: f64,
    /// KS distance of the raw samples to `N(theory_mean, theory_var)`.
    pub ks_theory: Option<f64>,
    /// KS distance of the sample-standardized values to `N(0, 1)`.
    pub ks_normal: Option<f64>,
    /// Samples standardized by the theory, against normal quantiles.
    pub qq: Vec<QqPoint>,
}

pub fn compare(theory: &TheoryRow, samples: &LssSampleSet) -> Result<Comparison> {
    if samples.f.to_string() != theory.f {
        return Err(Error::InvalidInput(format!(
            "samples are for {} but the theory row is for {}",
            samples.f, theory.f
        )));
    }
    let theory_mean = theory.raw_mean(samples.n);
    let stats = summarize(&samples.values, Some((theory_mean, theory.variance)))?;
    let qq = if theory.variance > 0.0 {
        qq_points(&samples.values, theory_mean, theory.variance.sqrt())
    } else {
        Vec::new()
    };
    Ok(Comparison {
        theory_mean,
        emp_mean: stats.mean,
        theory_var: theory.variance,
        emp_var: stats.variance,
        abs_diff_mean: (stats.mean - theory_mean).abs(),
        abs_diff_var: (stats.variance - theory.variance).abs(),
        ks_theory: stats.ks_theory,
        ks_normal: stats.ks_normal,
        qq,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn comparison_csv(c: &Comparison) -> String {
    format!(
        "{CSV_HEADER}\ntheory_mean,emp_mean,theory_var,emp_var,abs_diff_mean,abs_diff_var,ks_theory,ks_normal\n{},{},{},{},{},{},{},{}\n",
        c.theory_mean,
        c.emp_mean,
        c.theory_var,
        c.emp_var,
        c.abs_diff_mean,
        c.abs_diff_var,
        opt(c.ks_theory),
        opt(c.ks_normal)
    )
}

/// One-sample qq points: samples standardized by their own mean and standard
/// deviation against normal quantiles.
pub fn run_qq(samples: &[f64]) -> Result<Vec<QqPoint>> {
    let stats = summarize(samples, None)?;
    if stats.is_degenerate() {
        return Err(Error::InvalidInput("zero-variance sample has no qq plot".into()));
    }
    Ok(stats.qq)
}

/// Two-sample qq points: order statistics of `a` (x) against those of `b`
/// (y), both standardized by the mean and standard deviation of `a`.
pub fn run_qq_two_sample(a: &[f64], b: &[f64]) -> Result<Vec<QqPoint>> {
    if a.len() < 2 {
        return Err(Error::InvalidInput("reference sample needs at least 2 values".into()));
    }
    let (mean, var) = mean_and_variance(a);
    if !(var > 0.0) {
        return Err(Error::InvalidInput("zero-variance reference sample".into()));
    }
    qq_two_sample(a, b, mean, var.sqrt())
}

/// Comparison of the two renormalizations on the same adjacency matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedRun {
    pub true_p: LssSampleSet,
    pub empirical_p: LssSampleSet,
    pub ks: f64,
    pub qq: Vec<QqPoint>,
    pub max_qq_deviation: f64,
}

pub fn run_paired(spec: &SbmSpec, f: &TestFunction, nr: usize, seed: u64) -> Result<PairedRun> {
    let which = [Renormalization::TrueP, Renormalization::EmpiricalP];
    let mut sets = monte_carlo_many(spec, std::slice::from_ref(f), nr, &which, seed)?;
    let empirical_p = sets.pop().unwrap().remove(0);
    let true_p = sets.pop().unwrap().remove(0);
    let ks = two_sample_ks(&true_p.values, &empirical_p.values)?;
    let qq = run_qq_two_sample(&true_p.values, &empirical_p.values)?;
    let max_qq_deviation = max_qq_deviation(&qq);
    Ok(PairedRun {
        true_p,
        empirical_p,
        ks,
        qq,
        max_qq_deviation,
    })
}

/// Sweep over planted-partition models `P̃ = (p - q) I + q 11ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub sizes: Vec<usize>,
    pub ps: Vec<f64>,
    pub qs: Vec<f64>,
    pub nr: usize,
    pub seed: u64,
    pub which: Renormalization,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRow {
    pub p: f64,
    pub q: f64,
    pub theory_mean: f64,
    pub emp_mean: f64,
    pub theory_var: f64,
    pub emp_var: f64,
    pub abs_diff_mean: f64,
    pub abs_diff_var: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridReport {
    pub f: TestFunction,
    pub rows: Vec<GridRow>,
    pub max_abs_diff_mean: f64,
    pub max_abs_diff_var: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of grid cell `index` under master seed `seed`.
pub fn cell_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// Runs the grid once for several test functions, sharing the simulated
/// spectra. One report per function, cells in `p`-major order.
pub fn run_grid_many(cfg: &GridConfig, fs: &[TestFunction]) -> Result<Vec<GridReport>> {
    if cfg.ps.is_empty() || cfg.qs.is_empty() {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    for &v in cfg.ps.iter().chain(&cfg.qs) {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidInput(format!("grid value {v} outside (0, 1)")));
        }
    }
    let n = cfg.sizes.iter().sum::<usize>();
    let mut reports: Vec<GridReport> = fs
        .iter()
        .map(|f| GridReport {
            f: f.clone(),
            rows: Vec::new(),
            max_abs_diff_mean: 0.0,
            max_abs_diff_var: 0.0,
        })
        .collect();
    let cells = cfg.ps.iter().flat_map(|&p| cfg.qs.iter().map(move |&q| (p, q)));
    for (index, (p, q)) in cells.enumerate() {
        let spec = SbmSpec::planted(cfg.sizes.clone(), p, q)?;
        let params = sbm_to_block_params(&spec);
        let theory = run_theory(&params, fs, cfg.nodes)?;
        let sets = monte_carlo_many(&spec, fs, cfg.nr, &[cfg.which], cell_seed(cfg.seed, index))?;
        for ((report, th), set) in reports.iter_mut().zip(&theory).zip(&sets[0]) {
            let (emp_mean, emp_var) = mean_and_variance(&set.values);
            let theory_mean = th.raw_mean(n);
            let row = GridRow {
                p,
                q,
                theory_mean,
                emp_mean,
                theory_var: th.variance,
                emp_var,
                abs_diff_mean: (emp_mean - theory_mean).abs(),
                abs_diff_var: (emp_var - th.variance).abs(),
            };
            report.max_abs_diff_mean = report.max_abs_diff_mean.max(row.abs_diff_mean);
            report.max_abs_diff_var = report.max_abs_diff_var.max(row.abs_diff_var);
            report.rows.push(row);
        }
    }
    Ok(reports)
}

pub fn run_grid(cfg: &GridConfig, f: &TestFunction) -> Result<GridReport> {
    Ok(run_grid_many(cfg, std::slice::from_ref(f))?.remove(0))
}

/// Long-format grid CSV; the last comment line carries the maximal absolute
/// differences.
pub fn grid_csv(report: &GridReport) -> String {
    let mut s = format!(
        "{CSV_HEADER}\np,q,theory_mean,emp_mean,theory_var,emp_var,abs_diff_mean,abs_diff_var\n"
    );
    for r in &report.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.p, r.q, r.theory_mean, r.emp_mean, r.theory_var, r.emp_var, r.abs_diff_mean, r.abs_diff_var
        )
        .unwrap();
    }
    writeln!(
        s,
        "# f={} max_abs_diff_mean={} max_abs_diff_var={}",
        report.f, report.max_abs_diff_mean, report.max_abs_diff_var
    )
    .unwrap();
    s
}
