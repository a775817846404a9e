//! Martingale deflators and their statistical checks.
//!
//! The minimal deflator is `Ẑ = E(−λ·M)`, built step by step in log space.
//! Composed deflators multiply it by the exponential of an independent
//! Brownian motion. [`increment_test`] decides whether an ensemble behaves
//! like a martingale, a strict supermartingale or neither, and
//! [`numeraire_change`] re-expresses a market in units of a positive
//! portfolio.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::characteristics::{self, Characteristics};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::models::{AuxSeries, PathBundle};
use crate::rng::{Domain, NormalStream};
use crate::special::two_sided_p;
use crate::stats::{self, MeanSe};
use crate::{Error, Result};

/// Relative size below which an increment is rounding noise.
pub const ROUNDING_TOL: f64 = 1e-12;

/// Fewest paths the increment test accepts.
pub const MIN_TEST_PATHS: usize = 1000;

/// Discretization of `log Ẑ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeflatorScheme {
    /// `−λΔM − ½λᵀcλΔt`.
    Euler,
    /// Adds `−½(∂λ/∂M)(ΔM² − cΔt)` in one dimension when the model supplies
    /// the sensitivity; falls back to Euler otherwise.
    Milstein,
    /// Replaces `∫λ dS` by `ΔΛ − ½λ'cΔt` when `λ = Λ'(S)` is known, which is
    /// exact for the stochastic integral; falls back to Milstein otherwise.
    #[default]
    Potential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflatorConfig {
    pub scheme: DeflatorScheme,
    /// `Ẑ` is absorbed at 0 once the running `K̂` exceeds this.
    pub khat_cap: f64,
    /// ... or once `Ẑ` falls below this.
    pub zero_threshold: f64,
}

impl Default for DeflatorConfig {
    fn default() -> Self {
        DeflatorConfig { scheme: DeflatorScheme::Potential, khat_cap: 50.0, zero_threshold: 1e-12 }
    }
}

/// Deflator values on every path, `n_paths × (n_steps + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Deflator {
    n_paths: usize,
    n_steps: usize,
    z: Vec<f64>,
    hit_zero_at: Vec<Option<usize>>,
    path_ids: Vec<u64>,
    master_seed: u64,
}

impl Deflator {
    /// Wraps raw values; checks `z ≥ 0`, `z[0] = 1` and absorption at 0.
    pub fn from_values(n_steps: usize, z: Vec<f64>, path_ids: Vec<u64>, master_seed: u64) -> Result<Self> {
        let w = n_steps + 1;
        if z.len() != path_ids.len() * w {
            return Err(Error::DimensionMismatch { expected: path_ids.len() * w, got: z.len() });
        }
        let mut hit_zero_at = Vec::with_capacity(path_ids.len());
        for path in z.chunks(w) {
            if path[0] != 1.0 || path.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(Error::InvalidArgument("deflator must start at 1 and stay finite and nonnegative".into()));
            }
            let hit = path.iter().position(|&x| x == 0.0);
            if let Some(k) = hit {
                if path[k..].iter().any(|&x| x != 0.0) {
                    return Err(Error::InvalidArgument("deflator left 0 after absorption".into()));
                }
            }
            hit_zero_at.push(hit);
        }
        Ok(Deflator { n_paths: path_ids.len(), n_steps, z, hit_zero_at, path_ids, master_seed })
    }

    pub fn ones(n_steps: usize, path_ids: Vec<u64>, master_seed: u64) -> Self {
        let n_paths = path_ids.len();
        Deflator {
            n_paths,
            n_steps,
            z: vec![1.0; n_paths * (n_steps + 1)],
            hit_zero_at: vec![None; n_paths],
            path_ids,
            master_seed,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn path_ids(&self) -> &[u64] {
        &self.path_ids
    }
    pub fn values(&self) -> &[f64] {
        &self.z
    }
    pub fn path(&self, p: usize) -> &[f64] {
        let w = self.n_steps + 1;
        &self.z[p * w..(p + 1) * w]
    }
    pub fn value(&self, p: usize, k: usize) -> f64 {
        self.z[p * (self.n_steps + 1) + k]
    }
    /// First step index at which the path is 0, if any.
    pub fn hit_zero_at(&self, p: usize) -> Option<usize> {
        self.hit_zero_at[p]
    }
    pub fn n_absorbed(&self) -> usize {
        self.hit_zero_at.iter().filter(|h| h.is_some()).count()
    }
    pub fn terminal(&self) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, self.n_steps)).collect()
    }
    pub fn mean_terminal(&self) -> MeanSe {
        stats::mean_se(self.terminal())
    }
    /// True when every value is exactly 1.
    pub fn is_identically_one(&self) -> bool {
        self.z.iter().all(|&x| x == 1.0)
    }
    pub fn max_deviation_from_one(&self) -> f64 {
        self.z.iter().fold(0.0f64, |m, x| m.max((x - 1.0).abs()))
    }

    /// `Z·X` for a per-path series `X` of the same shape.
    pub fn times(&self, series: &[f64]) -> Result<Vec<f64>> {
        if series.len() != self.z.len() {
            return Err(Error::DimensionMismatch { expected: self.z.len(), got: series.len() });
        }
        Ok(self.z.iter().zip(series).map(|(z, x)| z * x).collect())
    }

    /// `Z·S^i` for every asset of `bundle`, one array per asset.
    pub fn products(&self, bundle: &PathBundle) -> Result<Vec<Vec<f64>>> {
        self.check_aligned(bundle)?;
        (0..bundle.dim()).map(|i| self.times(&bundle.component(i))).collect()
    }

    pub fn check_aligned(&self, bundle: &PathBundle) -> Result<()> {
        if self.n_steps != bundle.n_steps() || self.path_ids != bundle.path_ids() || self.master_seed != bundle.master_seed() {
            return Err(Error::Misaligned("deflator and bundle differ in grid or paths".into()));
        }
        Ok(())
    }
}

/// `Ẑ = E(−λ·M)` with `ΔM = ΔS − aΔt`, absorbed at 0 when `K̂` passes the cap.
pub fn minimal_deflator(chars: &Characteristics, bundle: &PathBundle, cfg: &DeflatorConfig) -> Result<Deflator> {
    chars.check_aligned(bundle)?;
    let (p_n, n, d) = (bundle.n_paths(), bundle.n_steps(), bundle.dim());
    let grid = bundle.grid();
    let second_order = cfg.scheme != DeflatorScheme::Euler && d == 1 && chars.has_sensitivity();
    let potential = second_order && cfg.scheme == DeflatorScheme::Potential && chars.has_potential();
    let milstein = second_order && !potential;
    let log_floor = libm::log(cfg.zero_threshold);
    let mut z = vec![0.0; p_n * (n + 1)];
    let mut hit_zero_at = vec![None; p_n];
    let mut dm = vec![0.0; d];
    for p in 0..p_n {
        let row = &mut z[p * (n + 1)..(p + 1) * (n + 1)];
        row[0] = 1.0;
        let khat = chars.khat_path(p);
        let mut log_z = 0.0;
        for k in 0..n {
            let dt = grid.dt(k);
            let a = chars.a(p, k);
            for i in 0..d {
                dm[i] = bundle.price(p, k + 1, i) - bundle.price(p, k, i) - a[i] * dt;
            }
            let lam = chars.lambda(p, k);
            if potential {
                // −∫λ dM = −ΔΛ + ½λ'cΔt + λaΔt
                let sens = chars.sensitivity(p, k).unwrap_or(0.0);
                let dl = chars.potential_increment(p, k).unwrap_or(0.0);
                let c = chars.c(p, k)[0];
                log_z += -dl + 0.5 * sens * c * dt + lam[0] * a[0] * dt - 0.5 * chars.khat_increment(p, k);
            } else {
                log_z -= linalg::dot(lam, &dm) + 0.5 * chars.khat_increment(p, k);
            }
            if milstein {
                let sens = chars.sensitivity(p, k).unwrap_or(0.0);
                log_z -= 0.5 * sens * (dm[0] * dm[0] - chars.c(p, k)[0] * dt);
            }
            if !(khat[k + 1] <= cfg.khat_cap) || !(log_z >= log_floor) {
                hit_zero_at[p] = Some(k + 1);
                break;
            }
            row[k + 1] = libm::exp(log_z);
        }
    }
    Ok(Deflator { n_paths: p_n, n_steps: n, z, hit_zero_at, path_ids: bundle.path_ids().to_vec(), master_seed: bundle.master_seed() })
}

/// `Ẑ·E(N)` with `N = θ_N·W'` and `W'` an independent Brownian motion drawn
/// from the orthogonal RNG domain.
pub fn compose_deflator(zhat: &Deflator, grid: &TimeGrid, theta_n: f64) -> Result<Deflator> {
    if !theta_n.is_finite() {
        return Err(Error::InvalidArgument(format!("orthogonal volatility {theta_n} must be finite")));
    }
    if grid.n_steps() != zhat.n_steps {
        return Err(Error::Misaligned("grid and deflator differ in steps".into()));
    }
    if theta_n == 0.0 {
        return Ok(zhat.clone());
    }
    let n = zhat.n_steps;
    let mut z = zhat.z.clone();
    let mut draw = [0.0];
    for (p, &id) in zhat.path_ids.iter().enumerate() {
        let mut s = NormalStream::new(zhat.master_seed, Domain::Orthogonal, id, 1);
        let mut w = 0.0;
        for k in 0..n {
            s.fill_step(&mut draw);
            w += draw[0] * libm::sqrt(grid.dt(k));
            let t = grid.times()[k + 1];
            z[p * (n + 1) + k + 1] *= libm::exp(theta_n * w - 0.5 * theta_n * theta_n * t);
        }
    }
    Ok(Deflator { z, ..zhat.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MartingaleKind {
    MartingaleConsistent,
    SupermartingaleStrict,
    Rejected,
}

impl MartingaleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MartingaleKind::MartingaleConsistent => "martingale_consistent",
            MartingaleKind::SupermartingaleStrict => "supermartingale_strict",
            MartingaleKind::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleVerdict {
    pub kind: MartingaleKind,
    pub mean_terminal: MeanSe,
    /// Bonferroni-combined p-value of the window and whole-horizon tests.
    pub p_value: f64,
    /// Standardized mean increment per window.
    pub window_z: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementTestConfig {
    pub windows: usize,
    pub alpha: f64,
}

impl Default for IncrementTestConfig {
    fn default() -> Self {
        IncrementTestConfig { windows: 8, alpha: 0.05 }
    }
}

fn z_score(m: &MeanSe) -> f64 {
    if m.se > 0.0 {
        m.mean / m.se
    } else if m.mean == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(m.mean)
    }
}

/// Tests an ensemble for mean-zero increments over equal time windows and
/// over the whole horizon. `values` is `n_paths × times.len()`, sampled at
/// increasing `times` from 0 to the horizon; only the columns at window
/// boundaries matter, so callers may pass a thinned sample.
///
/// A significant positive drift anywhere rejects; significant drift that is
/// only ever negative classifies the process as a strict supermartingale.
pub fn increment_test(values: &[f64], times: &[f64], cfg: &IncrementTestConfig) -> Result<MartingaleVerdict> {
    let w = times.len();
    if w < 2 || times.windows(2).any(|x| !(x[1] > x[0])) {
        return Err(Error::InvalidArgument("sample times must be increasing".into()));
    }
    if values.len() % w != 0 {
        return Err(Error::DimensionMismatch { expected: w, got: values.len() % w });
    }
    let p_n = values.len() / w;
    if p_n < MIN_TEST_PATHS {
        return Err(Error::InvalidArgument(format!("increment test needs at least {MIN_TEST_PATHS} paths, got {p_n}")));
    }
    if cfg.windows == 0 || !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidArgument("increment test needs windows > 0 and alpha in (0, 1)".into()));
    }
    let (t0, t_end) = (times[0], times[w - 1]);
    let ceil = |t: f64| times.partition_point(|&x| x < t).min(w - 1);
    let mut bounds: Vec<usize> =
        (0..=cfg.windows).map(|j| ceil(t0 + (t_end - t0) * j as f64 / cfg.windows as f64)).collect();
    bounds.dedup();
    // differences at rounding level are treated as exact zeros
    let inc = |lo: usize, hi: usize| {
        stats::mean_se((0..p_n).map(|p| {
            let (a, b) = (values[p * w + lo], values[p * w + hi]);
            let d = b - a;
            if d.abs() <= ROUNDING_TOL * a.abs().max(b.abs()).max(1.0) {
                0.0
            } else {
                d
            }
        }))
    };
    let mut window_z: Vec<f64> = bounds.windows(2).map(|b| z_score(&inc(b[0], b[1]))).collect();
    let whole = z_score(&inc(0, w - 1));
    let tests = window_z.len() + 1;
    window_z.push(whole);
    let p_min = window_z.iter().map(|&z| two_sided_p(z)).fold(1.0, f64::min);
    let p_value = (p_min * tests as f64).min(1.0);
    let significant = |z: f64| two_sided_p(z) * (tests as f64) < cfg.alpha;
    let kind = if p_value >= cfg.alpha {
        MartingaleKind::MartingaleConsistent
    } else if window_z.iter().any(|&z| z > 0.0 && significant(z)) {
        MartingaleKind::Rejected
    } else {
        MartingaleKind::SupermartingaleStrict
    };
    window_z.pop();
    let mean_terminal = stats::mean_se((0..p_n).map(|p| values[p * w + w - 1]));
    Ok(MartingaleVerdict { kind, mean_terminal, p_value, window_z })
}

/// Result of comparing the self-financing portfolio `V(1, λ/Ẑ)` with `1/Ẑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradabilityReport {
    /// `max_t |V_t − 1/Ẑ_t|` per path over the tested window.
    pub max_error: Vec<f64>,
    /// Paths whose window stops before `T` because `Ẑ` was absorbed.
    pub truncated: Vec<bool>,
}

impl TradabilityReport {
    pub fn rms(&self) -> f64 {
        stats::rms(&self.max_error)
    }
}

/// Portfolio value `v0 + Σ θ_kᵀ ΔS_k` for holdings `θ` (`n_paths × n_steps × d`).
pub fn portfolio_value(bundle: &PathBundle, theta: &[f64], v0: f64) -> Result<Vec<f64>> {
    let (p_n, n, d) = (bundle.n_paths(), bundle.n_steps(), bundle.dim());
    if theta.len() != p_n * n * d {
        return Err(Error::DimensionMismatch { expected: p_n * n * d, got: theta.len() });
    }
    let mut v = vec![0.0; p_n * (n + 1)];
    for p in 0..p_n {
        let mut acc = v0;
        v[p * (n + 1)] = acc;
        for k in 0..n {
            for i in 0..d {
                acc += theta[(p * n + k) * d + i] * (bundle.price(p, k + 1, i) - bundle.price(p, k, i));
            }
            v[p * (n + 1) + k + 1] = acc;
        }
    }
    Ok(v)
}

/// Checks that `1/Ẑ` is the value of the self-financing portfolio holding
/// `λ/Ẑ`, path by path, up to the absorption time of `Ẑ`.
pub fn tradability_check(zhat: &Deflator, chars: &Characteristics, bundle: &PathBundle) -> Result<TradabilityReport> {
    zhat.check_aligned(bundle)?;
    chars.check_aligned(bundle)?;
    let (p_n, n, d) = (bundle.n_paths(), bundle.n_steps(), bundle.dim());
    let mut max_error = vec![0.0; p_n];
    let mut truncated = vec![false; p_n];
    for p in 0..p_n {
        let end = match zhat.hit_zero_at(p) {
            Some(k) => {
                truncated[p] = true;
                k - 1
            }
            None => n,
        };
        let mut v = 1.0;
        let mut worst = 0.0f64;
        for k in 0..end {
            let z = zhat.value(p, k);
            let lam = chars.lambda(p, k);
            for i in 0..d {
                v += lam[i] / z * (bundle.price(p, k + 1, i) - bundle.price(p, k, i));
            }
            worst = worst.max((v - 1.0 / zhat.value(p, k + 1)).abs());
        }
        max_error[p] = worst;
    }
    Ok(TradabilityReport { max_error, truncated })
}

/// Smallest numéraire value treated as positive.
pub const NUMERAIRE_FLOOR: f64 = 1e-12;

/// Market `(S/V, 1/V)` and the paths on which `V` touched the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct NumeraireChange {
    pub bundle: PathBundle,
    pub flagged: Vec<bool>,
}

impl NumeraireChange {
    pub fn n_flagged(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

fn check_value_shape(bundle: &PathBundle, v: &[f64]) -> Result<()> {
    let w = bundle.n_steps() + 1;
    if v.len() != bundle.n_paths() * w {
        return Err(Error::DimensionMismatch { expected: bundle.n_paths() * w, got: v.len() });
    }
    Ok(())
}

/// Re-expresses `bundle` in units of `V` (`n_paths × (n_steps + 1)`).
/// The result has `d + 1` assets: `S^i/V` followed by `1/V`. `V` is held at
/// [`NUMERAIRE_FLOOR`] where it falls below it, and such paths are flagged.
pub fn numeraire_change(bundle: &PathBundle, v: &[f64]) -> Result<NumeraireChange> {
    check_value_shape(bundle, v)?;
    let (p_n, n, d) = (bundle.n_paths(), bundle.n_steps(), bundle.dim());
    let w = n + 1;
    let mut prices = Vec::with_capacity(p_n * w * (d + 1));
    let mut flagged = vec![false; p_n];
    for p in 0..p_n {
        for k in 0..w {
            let mut vk = v[p * w + k];
            if !(vk > NUMERAIRE_FLOOR) {
                flagged[p] = true;
                vk = NUMERAIRE_FLOOR;
            }
            prices.extend(bundle.price_vec(p, k).iter().map(|s| s / vk));
            prices.push(1.0 / vk);
        }
    }
    let aux = bundle.aux().map(|a| AuxSeries { name: a.name, values: a.values.clone() });
    let out = PathBundle::from_parts(
        bundle.grid().clone(),
        d + 1,
        bundle.noise_dim(),
        bundle.path_ids().to_vec(),
        prices,
        bundle.noise().to_vec(),
        aux,
        bundle.master_seed(),
    )?;
    Ok(NumeraireChange { bundle: out, flagged })
}

/// The companion deflator `Z·V` of the market `(S/V, 1/V)`.
pub fn transform_deflator(z: &Deflator, v: &[f64]) -> Result<Deflator> {
    let zv = z.times(v)?;
    Deflator::from_values(z.n_steps, zv, z.path_ids.clone(), z.master_seed)
}

/// Characteristics of `(S/V, 1/V)` for `V = V(v0, θ)` from those of `S`.
///
/// With `X = S/V` and `Y = 1/V`, Itô's formula gives martingale loadings
/// `e_iᵀ/V − S^iθᵀ/V²` and `−θᵀ/V²` on `dM`, plus the drift corrections
/// `−(cθ)^i/V² + S^iθᵀcθ/V³` and `θᵀcθ/V³`.
pub fn numeraire_characteristics(
    chars: &Characteristics,
    bundle: &PathBundle,
    changed: &NumeraireChange,
    theta: &[f64],
    v: &[f64],
) -> Result<Characteristics> {
    chars.check_aligned(bundle)?;
    check_value_shape(bundle, v)?;
    let (p_n, n, d) = (bundle.n_paths(), bundle.n_steps(), bundle.dim());
    if theta.len() != p_n * n * d {
        return Err(Error::DimensionMismatch { expected: p_n * n * d, got: theta.len() });
    }
    let e = d + 1;
    let mut a_out = vec![0.0; p_n * n * e];
    let mut c_out = vec![0.0; p_n * n * e * e];
    let mut b = vec![0.0; e * d];
    let mut corr = vec![0.0; e];
    for p in 0..p_n {
        for k in 0..n {
            let vk = v[p * (n + 1) + k].max(NUMERAIRE_FLOOR);
            let s = bundle.price_vec(p, k);
            let th = &theta[(p * n + k) * d..(p * n + k + 1) * d];
            let c = chars.c(p, k);
            let a = chars.a(p, k);
            let c_th = linalg::mat_vec(d, c, th);
            let th_c_th = linalg::dot(th, &c_th);
            for i in 0..d {
                for j in 0..d {
                    b[i * d + j] = if i == j { 1.0 / vk } else { 0.0 } - s[i] * th[j] / (vk * vk);
                }
                corr[i] = -c_th[i] / (vk * vk) + s[i] * th_c_th / (vk * vk * vk);
            }
            for j in 0..d {
                b[d * d + j] = -th[j] / (vk * vk);
            }
            corr[d] = th_c_th / (vk * vk * vk);
            let i0 = p * n + k;
            for r in 0..e {
                let br = &b[r * d..(r + 1) * d];
                a_out[i0 * e + r] = linalg::dot(br, a) + corr[r];
                let cb = linalg::mat_vec(d, c, br);
                for q in 0..e {
                    c_out[(i0 * e + r) * e + q] = linalg::dot(&b[q * d..(q + 1) * d], &cb);
                }
            }
        }
    }
    characteristics::from_rates(&changed.bundle, a_out, c_out, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::extract;
    use crate::models::{simulate, ModelSpec};

    #[test]
    fn zero_lambda_gives_unit_deflator() {
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let spec = ModelSpec::BlackScholes { mu: 0.0, sigma: 0.2, s0: 1.0 };
        let b = simulate(&spec, &g, 10, 1).unwrap();
        let ch = extract(&spec, &b).unwrap();
        let z = minimal_deflator(&ch, &b, &DeflatorConfig::default()).unwrap();
        assert!(z.is_identically_one());
        let tr = tradability_check(&z, &ch, &b).unwrap();
        assert!(tr.max_error.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn zero_orthogonal_vol_is_identity() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let spec = ModelSpec::BlackScholes { mu: 0.1, sigma: 0.2, s0: 1.0 };
        let b = simulate(&spec, &g, 4, 1).unwrap();
        let z = minimal_deflator(&extract(&spec, &b).unwrap(), &b, &DeflatorConfig::default()).unwrap();
        assert_eq!(compose_deflator(&z, &g, 0.0).unwrap(), z);
        assert!(compose_deflator(&z, &g, f64::NAN).is_err());
    }

    #[test]
    fn absorption_at_cap() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let spec = ModelSpec::BlackScholes { mu: 2.0, sigma: 0.2, s0: 1.0 };
        // K̂ grows by 100/16 per step
        let b = simulate(&spec, &g, 3, 1).unwrap();
        let cfg = DeflatorConfig { khat_cap: 10.0, ..DeflatorConfig::default() };
        let z = minimal_deflator(&extract(&spec, &b).unwrap(), &b, &cfg).unwrap();
        for p in 0..3 {
            assert_eq!(z.hit_zero_at(p), Some(2));
            assert!(z.path(p)[2..].iter().all(|&x| x == 0.0));
            assert!(z.path(p)[..2].iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn constant_process_is_martingale_consistent() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let v = increment_test(&vec![1.0; 1000 * 9], g.times(), &IncrementTestConfig::default()).unwrap();
        assert_eq!(v.kind, MartingaleKind::MartingaleConsistent);
        assert_eq!(v.p_value, 1.0);
        assert!(increment_test(&vec![1.0; 10 * 9], g.times(), &IncrementTestConfig::default()).is_err());
    }

    #[test]
    fn drifts_are_classified() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let up: Vec<f64> = (0..1000).flat_map(|p| (0..9).map(move |k| k as f64 * (1.0 + (p % 7) as f64 * 0.01))).collect();
        assert_eq!(increment_test(&up, g.times(), &IncrementTestConfig::default()).unwrap().kind, MartingaleKind::Rejected);
        let down: Vec<f64> = up.iter().map(|x| -x).collect();
        assert_eq!(
            increment_test(&down, g.times(), &IncrementTestConfig::default()).unwrap().kind,
            MartingaleKind::SupermartingaleStrict
        );
    }

    #[test]
    fn unit_numeraire_appends_constant_asset() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let spec = ModelSpec::BlackScholes { mu: 0.1, sigma: 0.2, s0: 1.0 };
        let b = simulate(&spec, &g, 3, 1).unwrap();
        let ch = numeraire_change(&b, &vec![1.0; 27]).unwrap();
        assert_eq!(ch.bundle.dim(), 2);
        assert_eq!(ch.bundle.component(0), b.component(0));
        assert!(ch.bundle.component(1).iter().all(|&x| x == 1.0));
        assert_eq!(ch.n_flagged(), 0);
        let mut v = vec![1.0; 27];
        v[5] = -1.0;
        assert_eq!(numeraire_change(&b, &v).unwrap().flagged, vec![true, false, false]);
    }
}
