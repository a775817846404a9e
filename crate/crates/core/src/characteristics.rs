//! Semimartingale characteristics along simulated paths.
//!
//! [`extract`] evaluates the closed-form drift and diffusion rates at the left
//! point of every step and splits the drift into `cλ + ν`. The mean-variance
//! trade-off `K̂` is the running sum of `λᵀcλ·Δt`. For models without closed
//! forms, [`empirical_nu_test`] looks for drift that the quadratic variation
//! cannot explain, and [`detect_divergence`] compares `K̂` across nested grids.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::TimeGrid;
use crate::linalg::{self, SymMatrix};
use crate::models::{ModelSpec, PathBundle, StepContext};
use crate::stats;
use crate::{Error, Result};

/// Per-path, per-step characteristics of an ensemble.
///
/// Step arrays have `n_paths × n_steps` rows; `khat` has one more column and
/// starts at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristics {
    n_paths: usize,
    n_steps: usize,
    dim: usize,
    path_ids: Vec<u64>,
    master_seed: u64,
    a: Vec<f64>,
    c: Vec<f64>,
    lambda: Vec<f64>,
    nu: Vec<f64>,
    khat_increment: Vec<f64>,
    khat: Vec<f64>,
    sensitivity: Option<Vec<f64>>,
    potential_increment: Option<Vec<f64>>,
}

impl Characteristics {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn path_ids(&self) -> &[u64] {
        &self.path_ids
    }
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }
    pub fn a(&self, p: usize, k: usize) -> &[f64] {
        let o = (p * self.n_steps + k) * self.dim;
        &self.a[o..o + self.dim]
    }
    pub fn c(&self, p: usize, k: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        let o = (p * self.n_steps + k) * d2;
        &self.c[o..o + d2]
    }
    pub fn lambda(&self, p: usize, k: usize) -> &[f64] {
        let o = (p * self.n_steps + k) * self.dim;
        &self.lambda[o..o + self.dim]
    }
    pub fn nu(&self, p: usize, k: usize) -> &[f64] {
        let o = (p * self.n_steps + k) * self.dim;
        &self.nu[o..o + self.dim]
    }
    pub fn khat_increment(&self, p: usize, k: usize) -> f64 {
        self.khat_increment[p * self.n_steps + k]
    }
    /// Running `K̂` of path `p`, length `n_steps + 1`.
    pub fn khat_path(&self, p: usize) -> &[f64] {
        let w = self.n_steps + 1;
        &self.khat[p * w..(p + 1) * w]
    }
    pub fn khat_terminal(&self) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.khat[p * (self.n_steps + 1) + self.n_steps]).collect()
    }
    /// `∂λ/∂M` per step for scalar models that provide it.
    pub fn sensitivity(&self, p: usize, k: usize) -> Option<f64> {
        self.sensitivity.as_ref().map(|s| s[p * self.n_steps + k])
    }
    /// `Λ(S_{k+1}) − Λ(S_k)` for models with a closed-form antiderivative of `λ`.
    pub fn potential_increment(&self, p: usize, k: usize) -> Option<f64> {
        self.potential_increment.as_ref().map(|v| v[p * self.n_steps + k])
    }

    pub fn has_potential(&self) -> bool {
        self.potential_increment.is_some()
    }

    pub fn has_sensitivity(&self) -> bool {
        self.sensitivity.is_some()
    }

    /// Largest `|ν|` entry over the ensemble, relative to `1 + |a|`.
    pub fn max_relative_nu(&self) -> f64 {
        let mut worst = 0.0f64;
        for (nu, a) in self.nu.chunks(self.dim).zip(self.a.chunks(self.dim)) {
            let scale = 1.0 + linalg::norm(a);
            worst = worst.max(linalg::norm(nu) / scale);
        }
        worst
    }

    /// Checks that `self` was computed from `bundle`.
    pub fn check_aligned(&self, bundle: &PathBundle) -> Result<()> {
        if self.n_steps != bundle.n_steps()
            || self.dim != bundle.dim()
            || self.path_ids != bundle.path_ids()
            || self.master_seed != bundle.master_seed()
        {
            return Err(Error::Misaligned("characteristics and bundle differ in grid, dimension or paths".into()));
        }
        Ok(())
    }
}

/// Builds characteristics from caller-supplied rates `a` (`P × n × d`) and
/// `c` (`P × n × d × d`). Used for derived markets such as numéraire changes.
pub fn from_rates(
    bundle: &PathBundle,
    a: Vec<f64>,
    c: Vec<f64>,
    sensitivity: Option<Vec<f64>>,
) -> Result<Characteristics> {
    let (p_n, n, d) = (bundle.n_paths(), bundle.n_steps(), bundle.dim());
    if a.len() != p_n * n * d {
        return Err(Error::DimensionMismatch { expected: p_n * n * d, got: a.len() });
    }
    if c.len() != p_n * n * d * d {
        return Err(Error::DimensionMismatch { expected: p_n * n * d * d, got: c.len() });
    }
    if let Some(s) = &sensitivity {
        if d != 1 || s.len() != p_n * n {
            return Err(Error::DimensionMismatch { expected: p_n * n, got: s.len() });
        }
    }
    let mut lambda = vec![0.0; a.len()];
    let mut nu = vec![0.0; a.len()];
    let mut khat_increment = vec![0.0; p_n * n];
    let mut khat = vec![0.0; p_n * (n + 1)];
    let mut csym = vec![0.0; d * d];
    for p in 0..p_n {
        let mut run = 0.0;
        for k in 0..n {
            let i = p * n + k;
            csym.copy_from_slice(&c[i * d * d..(i + 1) * d * d]);
            if d > 1 {
                csym = SymMatrix::symmetric(d, csym)?.as_slice().to_vec();
            }
            let quad = linalg::decompose_into(
                d,
                &csym,
                &a[i * d..(i + 1) * d],
                &mut lambda[i * d..(i + 1) * d],
                &mut nu[i * d..(i + 1) * d],
            )?;
            let inc = quad * bundle.grid().dt(k);
            khat_increment[i] = inc;
            run += inc;
            khat[p * (n + 1) + k + 1] = run;
        }
    }
    Ok(Characteristics {
        n_paths: p_n,
        n_steps: n,
        dim: d,
        path_ids: bundle.path_ids().to_vec(),
        master_seed: bundle.master_seed(),
        a,
        c,
        lambda,
        nu,
        khat_increment,
        khat,
        sensitivity,
        potential_increment: None,
    })
}

/// Evaluates the closed-form characteristics of `spec` along `bundle`.
pub fn extract(spec: &ModelSpec, bundle: &PathBundle) -> Result<Characteristics> {
    if !spec.has_closed_form() {
        return Err(Error::Structural(spec.name()));
    }
    if bundle.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: bundle.dim() });
    }
    let (p_n, n, d) = (bundle.n_paths(), bundle.n_steps(), bundle.dim());
    let grid = bundle.grid();
    let (times, rem) = (grid.times(), grid.remaining());
    let mut a = vec![0.0; p_n * n * d];
    let mut c = vec![0.0; p_n * n * d * d];
    let mut sens = if d == 1 { Some(vec![0.0; p_n * n]) } else { None };
    for p in 0..p_n {
        let aux = bundle.aux_path(p);
        for k in 0..n {
            let ctx = StepContext {
                t: times[k],
                t_next: times[k + 1],
                remaining: rem[k],
                horizon: grid.horizon(),
                price: bundle.price_vec(p, k),
                aux: aux.map_or(f64::NAN, |x| x[k]),
            };
            let i = p * n + k;
            spec.characteristics(&ctx, &mut a[i * d..(i + 1) * d], &mut c[i * d * d..(i + 1) * d * d])?;
            if let Some(s) = sens.as_mut() {
                match spec.lambda_sensitivity(&ctx) {
                    Some(v) => s[i] = v,
                    None => {
                        // drop the second-order term for the whole ensemble
                        sens = None;
                    }
                }
            }
        }
    }
    let mut chars = from_rates(bundle, a, c, sens)?;
    if d == 1 {
        let mut pot = Vec::with_capacity(p_n * n);
        'paths: for p in 0..p_n {
            for k in 0..n {
                match (spec.lambda_potential(bundle.price(p, k, 0)), spec.lambda_potential(bundle.price(p, k + 1, 0))) {
                    (Some(l0), Some(l1)) => pot.push(l1 - l0),
                    _ => {
                        pot.clear();
                        break 'paths;
                    }
                }
            }
        }
        if pot.len() == p_n * n {
            chars.potential_increment = Some(pot);
        }
    }
    Ok(chars)
}

/// Binning of the empirical ν-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuBinning {
    pub time_bins: usize,
    pub state_bins: usize,
    pub min_samples: usize,
}

impl Default for NuBinning {
    fn default() -> Self {
        NuBinning { time_bins: 8, state_bins: 16, min_samples: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuLevel {
    pub n_steps: usize,
    /// Share of the drift variation left unexplained by a smooth `λ`.
    pub fraction: f64,
    pub bins_used: usize,
    pub bins_total: usize,
}

impl NuLevel {
    pub fn coverage(&self) -> f64 {
        self.bins_used as f64 / self.bins_total as f64
    }
}

/// Weighted least squares on a handful of regressors.
fn weighted_lsq(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let m = x.first().map_or(0, |r| r.len());
    let mut xtx = vec![0.0; m * m];
    let mut xty = vec![0.0; m];
    for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
        for i in 0..m {
            xty[i] += wi * row[i] * yi;
            for j in 0..m {
                xtx[i * m + j] += wi * row[i] * row[j];
            }
        }
    }
    let inv = linalg::pinv(&SymMatrix::symmetric(m, xtx)?)?;
    Ok(inv.mul_vec(&xty))
}

/// Robust fit of `D_b ≈ Q_b·p(z_b)` with `p` a polynomial of degree ≤ 2, by
/// iteratively reweighted least squares on absolute residuals.
fn robust_fit(d: &[f64], q: &[f64], z: &[f64], se: &[f64]) -> Result<Vec<f64>> {
    let deg = (d.len().saturating_sub(1)).min(2);
    let x: Vec<Vec<f64>> = q.iter().zip(z).map(|(&qb, &zb)| (0..=deg).map(|p| qb * libm::pow(zb, p as f64)).collect()).collect();
    let base: Vec<f64> = se.iter().map(|s| 1.0 / (s * s).max(f64::MIN_POSITIVE)).collect();
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut beta = weighted_lsq(&x, d, &base)?;
    for _ in 0..50 {
        let w: Vec<f64> = x
            .iter()
            .zip(d)
            .zip(se)
            .map(|((row, &db), &s)| {
                let fit: f64 = row.iter().zip(&beta).map(|(r, b)| r * b).sum();
                let r = (db - fit).abs().max(1e-12 * scale);
                1.0 / (r * s.max(f64::MIN_POSITIVE))
            })
            .collect();
        beta = weighted_lsq(&x, d, &w)?;
    }
    Ok((0..d.len()).map(|i| x[i].iter().zip(&beta).map(|(r, b)| r * b).sum()).collect())
}

/// Residual fraction of one ensemble.
///
/// Per time bin, step increments are grouped by state quantile. Each bin gives
/// a drift sum `D_b = ΣΔS/P`, a quadratic-variation sum `Q_b = ΣΔS²/P` and the
/// standard error of `D_b`. A drift that is absolutely continuous with respect
/// to `d⟨M⟩` satisfies `D_b ≈ λ(x_b)Q_b` with `λ` smooth in the state; the
/// fraction is `Σ max(0, |D_b − fit_b| − 3SE_b) / Σ|D_b|`.
pub fn nu_residual_fraction(bundle: &PathBundle, binning: &NuBinning) -> Result<NuLevel> {
    if bundle.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: bundle.dim() });
    }
    if binning.time_bins == 0 || binning.state_bins == 0 {
        return Err(Error::InvalidArgument("bin counts must be positive".into()));
    }
    let (p_n, n) = (bundle.n_paths(), bundle.n_steps());
    let grid = bundle.grid();
    let t_end = grid.horizon();
    let (mut num, mut den) = (0.0, 0.0);
    let (mut used, mut total) = (0usize, 0usize);
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for tb in 0..binning.time_bins {
        let lo_t = t_end * tb as f64 / binning.time_bins as f64;
        let hi_t = t_end * (tb + 1) as f64 / binning.time_bins as f64;
        let steps: Vec<usize> = (0..n)
            .filter(|&k| {
                let t = grid.times()[k];
                t >= lo_t && (t < hi_t || (tb + 1 == binning.time_bins && t <= hi_t))
            })
            .collect();
        total += binning.state_bins;
        if steps.is_empty() {
            continue;
        }
        samples.clear();
        for p in 0..p_n {
            for &k in &steps {
                let x = bundle.price(p, k, 0);
                samples.push((x, bundle.price(p, k + 1, 0) - x));
            }
        }
        samples.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let m = samples.len();
        let (mut d, mut q, mut se, mut z) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for sb in 0..binning.state_bins {
            let lo = sb * m / binning.state_bins;
            let hi = (sb + 1) * m / binning.state_bins;
            if hi - lo < binning.min_samples {
                continue;
            }
            let chunk = &samples[lo..hi];
            let cnt = chunk.len() as f64;
            let sum: f64 = chunk.iter().map(|s| s.1).sum();
            let sq: f64 = chunk.iter().map(|s| s.1 * s.1).sum();
            let mean = sum / cnt;
            let var: f64 = chunk.iter().map(|s| (s.1 - mean) * (s.1 - mean)).sum();
            d.push(sum / p_n as f64);
            q.push(sq / p_n as f64);
            se.push(libm::sqrt(var) / p_n as f64);
            z.push(chunk[chunk.len() / 2].0);
        }
        used += d.len();
        if d.is_empty() {
            continue;
        }
        // standardize the state coordinate
        let mut zs = z.clone();
        let med = stats::quantile_in_place(&mut zs, 0.5);
        let iqr = stats::quantile_in_place(&mut zs, 0.75) - stats::quantile_in_place(&mut zs, 0.25);
        let spread = if iqr > 0.0 { iqr } else { 1.0 };
        let z: Vec<f64> = z.iter().map(|v| (v - med) / spread).collect();
        let fit = robust_fit(&d, &q, &z, &se)?;
        for i in 0..d.len() {
            num += ((d[i] - fit[i]).abs() - 3.0 * se[i]).max(0.0);
            den += d[i].abs();
        }
    }
    let fraction = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 };
    Ok(NuLevel { n_steps: n, fraction, bins_used: used, bins_total: total })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuTest {
    pub levels: Vec<NuLevel>,
}

impl NuTest {
    pub fn finest(&self) -> &NuLevel {
        self.levels.last().expect("at least two levels")
    }
    /// Smallest residual fraction over the levels.
    pub fn min_fraction(&self) -> f64 {
        self.levels.iter().map(|l| l.fraction).fold(f64::INFINITY, f64::min)
    }
}

/// Runs [`nu_residual_fraction`] on two or more refinement levels.
pub fn empirical_nu_test(levels: &[&PathBundle], binning: &NuBinning) -> Result<NuTest> {
    if levels.len() < 2 {
        return Err(Error::TooFewLevels { needed: 2, got: levels.len() });
    }
    let levels = levels.iter().map(|b| nu_residual_fraction(b, binning)).collect::<Result<_>>()?;
    Ok(NuTest { levels })
}

/// `K̂` sampled at probe times, `n_paths × n_probes`.
#[derive(Debug, Clone, PartialEq)]
pub struct KhatProbes {
    pub probe_times: Vec<f64>,
    pub values: Vec<f64>,
}

impl KhatProbes {
    pub fn sample(chars: &Characteristics, grid: &TimeGrid, probe_times: &[f64]) -> Result<Self> {
        if grid.n_steps() != chars.n_steps() {
            return Err(Error::Misaligned("grid and characteristics differ in steps".into()));
        }
        let idx: Vec<usize> = probe_times
            .iter()
            .map(|&t| grid.index_of(t).ok_or_else(|| Error::InvalidArgument("probe time is not a grid point".into())))
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(chars.n_paths() * idx.len());
        for p in 0..chars.n_paths() {
            let kh = chars.khat_path(p);
            values.extend(idx.iter().map(|&k| kh[k]));
        }
        Ok(KhatProbes { probe_times: probe_times.to_vec(), values })
    }

    pub fn n_paths(&self) -> usize {
        if self.probe_times.is_empty() {
            0
        } else {
            self.values.len() / self.probe_times.len()
        }
    }

    /// Appends the paths of another chunk with the same probes.
    pub fn append(&mut self, other: &KhatProbes) -> Result<()> {
        if self.probe_times != other.probe_times {
            return Err(Error::Misaligned("probe times differ".into()));
        }
        self.values.extend_from_slice(&other.values);
        Ok(())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.probe_times.len()).copied().collect()
    }

    /// `(time, q10, q50, q90)` of `K̂` at every probe.
    pub fn quantile_curve(&self) -> Vec<(f64, f64, f64, f64)> {
        (0..self.probe_times.len())
            .map(|j| {
                let mut col = self.column(j);
                (
                    self.probe_times[j],
                    stats::quantile_in_place(&mut col, 0.1),
                    stats::quantile_in_place(&mut col, 0.5),
                    stats::quantile_in_place(&mut col, 0.9),
                )
            })
            .collect()
    }

    /// Median `K̂` increment over each probe interval.
    fn median_increments(&self) -> Vec<f64> {
        let m = self.probe_times.len();
        (1..m)
            .map(|j| {
                let mut inc: Vec<f64> = (0..self.n_paths())
                    .map(|p| {
                        let d = self.values[p * m + j] - self.values[p * m + j - 1];
                        if d.is_nan() {
                            f64::INFINITY
                        } else {
                            d
                        }
                    })
                    .collect();
                stats::quantile_in_place(&mut inc, 0.5)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceConfig {
    /// Ratio per refinement doubling that counts as growth.
    pub rho: f64,
    /// Consecutive exceedances needed to call divergence.
    pub consecutive: usize,
    /// Median increments at or below this count as 0.
    pub negligible: f64,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        DivergenceConfig { rho: 1.8, consecutive: 2, negligible: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceKind {
    Converged,
    DivergesAtTerminal,
    JumpsToInfinityAt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confidence {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceVerdict {
    pub kind: DivergenceKind,
    /// Level-to-level ratios of the median increment on the decisive
    /// interval (the first divergent one, else the one growing the most).
    pub ratios: Vec<f64>,
    pub confidence: Confidence,
    /// `(start, end)` of the decisive interval.
    pub interval: (f64, f64),
    /// Ratios for every probe interval, `[interval][level pair]`.
    pub interval_ratios: Vec<Vec<f64>>,
}

fn ratio(coarse: f64, fine: f64, negligible: f64) -> f64 {
    let coarse = if coarse.abs() <= negligible { 0.0 } else { coarse };
    let fine = if fine.abs() <= negligible { 0.0 } else { fine };
    if coarse == fine {
        1.0
    } else if coarse == 0.0 {
        f64::INFINITY
    } else {
        fine / coarse
    }
}

/// Localizes where `K̂` blows up by comparing median increments between probe
/// times across at least three coupled refinement levels (coarse to fine).
pub fn detect_divergence(levels: &[KhatProbes], cfg: &DivergenceConfig) -> Result<DivergenceVerdict> {
    if levels.len() < 3 {
        return Err(Error::TooFewLevels { needed: 3, got: levels.len() });
    }
    if cfg.consecutive == 0 || cfg.consecutive > levels.len() - 1 {
        return Err(Error::InvalidArgument("consecutive exceedances must fit the level count".into()));
    }
    let probes = &levels[0].probe_times;
    if probes.len() < 2 || levels.iter().any(|l| &l.probe_times != probes) {
        return Err(Error::Misaligned("levels must share at least two probe times".into()));
    }
    let incs: Vec<Vec<f64>> = levels.iter().map(|l| l.median_increments()).collect();
    let n_int = probes.len() - 1;
    let interval_ratios: Vec<Vec<f64>> =
        (0..n_int).map(|j| (1..levels.len()).map(|l| ratio(incs[l - 1][j], incs[l][j], cfg.negligible)).collect()).collect();
    let diverges = |r: &[f64]| r.windows(cfg.consecutive).any(|w| w.iter().all(|&x| x >= cfg.rho));
    let horizon = *probes.last().expect("non-empty");
    if let Some(j) = (0..n_int).find(|&j| diverges(&interval_ratios[j])) {
        let r = interval_ratios[j].clone();
        let kind = if probes[j + 1] == horizon && j + 1 == n_int {
            DivergenceKind::DivergesAtTerminal
        } else {
            DivergenceKind::JumpsToInfinityAt(probes[j])
        };
        let confidence = if r.iter().all(|&x| x >= cfg.rho) { Confidence::Strong } else { Confidence::Weak };
        return Ok(DivergenceVerdict {
            kind,
            ratios: r,
            confidence,
            interval: (probes[j], probes[j + 1]),
            interval_ratios,
        });
    }
    let growth = |r: &[f64]| r.last().copied().unwrap_or(1.0);
    let j = (0..n_int)
        .max_by(|&x, &y| growth(&interval_ratios[x]).total_cmp(&growth(&interval_ratios[y])))
        .expect("non-empty");
    let any_exceed = interval_ratios.iter().flatten().any(|&x| x >= cfg.rho);
    Ok(DivergenceVerdict {
        kind: DivergenceKind::Converged,
        ratios: interval_ratios[j].clone(),
        confidence: if any_exceed { Confidence::Weak } else { Confidence::Strong },
        interval: (probes[j], probes[j + 1]),
        interval_ratios,
    })
}
