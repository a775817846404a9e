//! Trading strategies, discrete stochastic integration and the explicit
//! arbitrage constructions.
//!
//! A [`Strategy`] holds `h_k` for every path and step; `h_k` is decided at
//! `t_k` and held over `(t_k, t_{k+1}]`, so gains are left-point sums.
//! Stopping times are the first grid point at which the defining condition
//! holds.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::characteristics::Characteristics;
use crate::deflators::Deflator;
use crate::grid::TimeGrid;
use crate::models::PathBundle;
use crate::special::{norm_cdf, norm_pdf};
use crate::stats::{self, MeanSe};
use crate::{Error, Result};

/// Slack allowed below a declared admissibility floor.
pub const TOL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub label: String,
    /// Claimed `a` in `G ≥ −a`.
    pub floor: f64,
    n_paths: usize,
    n_steps: usize,
    dim: usize,
    h: Vec<f64>,
    path_ids: Vec<u64>,
}

impl Strategy {
    /// `h` is `n_paths × n_steps × dim`.
    pub fn new(label: impl Into<String>, floor: f64, n_steps: usize, dim: usize, path_ids: Vec<u64>, h: Vec<f64>) -> Result<Self> {
        let n_paths = path_ids.len();
        if h.len() != n_paths * n_steps * dim {
            return Err(Error::DimensionMismatch { expected: n_paths * n_steps * dim, got: h.len() });
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("strategy positions must be finite".into()));
        }
        if !(floor >= 0.0) {
            return Err(Error::InvalidArgument(format!("admissibility floor {floor} must be nonnegative")));
        }
        Ok(Strategy { label: label.into(), floor, n_paths, n_steps, dim, h, path_ids })
    }

    /// Constant position `h` in every asset on every step.
    pub fn constant(bundle: &PathBundle, h: f64, floor: f64) -> Result<Self> {
        let len = bundle.n_paths() * bundle.n_steps() * bundle.dim();
        Strategy::new("constant", floor, bundle.n_steps(), bundle.dim(), bundle.path_ids().to_vec(), vec![h; len])
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn positions(&self) -> &[f64] {
        &self.h
    }
    pub fn position(&self, p: usize, k: usize) -> &[f64] {
        let o = (p * self.n_steps + k) * self.dim;
        &self.h[o..o + self.dim]
    }

    /// `n·H`, with the floor scaled accordingly.
    pub fn scaled(&self, n: f64) -> Result<Self> {
        Strategy::new(
            format!("{}*{n}", self.label),
            self.floor * n.abs(),
            self.n_steps,
            self.dim,
            self.path_ids.clone(),
            self.h.iter().map(|x| x * n).collect(),
        )
    }

    /// `ψ·H` for a scalar predictable `ψ` (`n_paths × n_steps`). The floor
    /// is not preserved in general and is reset to `floor`.
    pub fn modulated(&self, psi: &[f64], floor: f64) -> Result<Self> {
        if psi.len() != self.n_paths * self.n_steps {
            return Err(Error::DimensionMismatch { expected: self.n_paths * self.n_steps, got: psi.len() });
        }
        let h = self.h.chunks(self.dim).zip(psi).flat_map(|(hk, &s)| hk.iter().map(move |x| x * s)).collect();
        Strategy::new(format!("psi*{}", self.label), floor, self.n_steps, self.dim, self.path_ids.clone(), h)
    }

    fn check_aligned(&self, bundle: &PathBundle) -> Result<()> {
        if self.n_steps != bundle.n_steps() || self.dim != bundle.dim() || self.path_ids != bundle.path_ids() {
            return Err(Error::Misaligned(format!("strategy `{}` and bundle differ in grid, dimension or paths", self.label)));
        }
        Ok(())
    }
}

/// Gains `G_t(H)` on every path, `n_paths × (n_steps + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainsReport {
    pub label: String,
    pub floor: f64,
    n_paths: usize,
    n_steps: usize,
    g: Vec<f64>,
    /// Paths whose gains went below `−floor − TOL_FLOOR`.
    pub floor_violations: usize,
    /// Smallest gain over all paths and times.
    pub min_gain: f64,
}

impl GainsReport {
    pub fn from_gains(label: impl Into<String>, floor: f64, n_steps: usize, g: Vec<f64>) -> Result<Self> {
        let w = n_steps + 1;
        if g.len() % w != 0 {
            return Err(Error::DimensionMismatch { expected: w, got: g.len() % w });
        }
        let mut floor_violations = 0;
        let mut min_gain = f64::INFINITY;
        for path in g.chunks(w) {
            let m = path.iter().copied().fold(f64::INFINITY, f64::min);
            min_gain = min_gain.min(m);
            if m < -floor - TOL_FLOOR {
                floor_violations += 1;
            }
        }
        Ok(GainsReport { label: label.into(), floor, n_paths: g.len() / w, n_steps, g, floor_violations, min_gain })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn gains(&self) -> &[f64] {
        &self.g
    }
    pub fn path(&self, p: usize) -> &[f64] {
        let w = self.n_steps + 1;
        &self.g[p * w..(p + 1) * w]
    }
    pub fn at(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.g[p * (self.n_steps + 1) + k]).collect()
    }
    pub fn terminal(&self) -> Vec<f64> {
        self.at(self.n_steps)
    }
    pub fn terminal_stats(&self) -> MeanSe {
        stats::mean_se(self.terminal())
    }
    /// `P(G_T > eps)`.
    pub fn prob_terminal_above(&self, eps: f64) -> f64 {
        stats::fraction(self.terminal().into_iter().map(|g| g > eps))
    }
    pub fn terminal_quantile(&self, q: f64) -> f64 {
        stats::quantile(&self.terminal(), q)
    }
    /// Share of all steps on which `G` dropped by more than `tol`.
    pub fn monotonicity_violations(&self, tol: f64) -> f64 {
        let w = self.n_steps + 1;
        stats::fraction(self.g.chunks(w).flat_map(|p| p.windows(2).map(move |x| x[1] - x[0] < -tol)))
    }
}

/// Left-point sums `G_{k+1} = G_k + h_kᵀ(S_{k+1} − S_k)`.
pub fn integrate(strategy: &Strategy, bundle: &PathBundle) -> Result<GainsReport> {
    strategy.check_aligned(bundle)?;
    let (p_n, n, d) = (bundle.n_paths(), bundle.n_steps(), bundle.dim());
    let mut g = vec![0.0; p_n * (n + 1)];
    for p in 0..p_n {
        let mut acc = 0.0;
        for k in 0..n {
            let h = strategy.position(p, k);
            for i in 0..d {
                if h[i] != 0.0 {
                    acc += h[i] * (bundle.price(p, k + 1, i) - bundle.price(p, k, i));
                }
            }
            g[p * (n + 1) + k + 1] = acc;
        }
    }
    GainsReport::from_gains(strategy.label.clone(), strategy.floor, n, g)
}

/// Band half-width `c·√Δt` of the zero-set indicator on a uniform grid.
pub fn mollification_width(c: f64, grid: &TimeGrid) -> f64 {
    c * libm::sqrt(grid.horizon() / grid.n_steps() as f64)
}

/// Expected gains of the band strategy per unit of local time when the band
/// half-width is `c·√Δt`: `κ(c) = 2[(Φ(c) − ½) − c²(1 − Φ(c)) + cφ(c)]`.
pub fn occupation_scaling(c: f64) -> f64 {
    let cdf = norm_cdf(c);
    2.0 * ((cdf - 0.5) - c * c * (1.0 - cdf) + c * norm_pdf(c))
}

/// `h_k = 1{|N_{t_k}| ≤ ε}` for `S = |N|`: trades only while the underlying
/// sits on its zero set, where `S` grows by local time alone.
pub fn increasing_profit_strategy(bundle: &PathBundle, eps_zero: f64) -> Result<Strategy> {
    if !(eps_zero > 0.0) {
        return Err(Error::InvalidArgument(format!("band width {eps_zero} must be positive")));
    }
    let aux = bundle.require_aux("N")?;
    let (p_n, n) = (bundle.n_paths(), bundle.n_steps());
    let mut h = vec![0.0; p_n * n];
    for p in 0..p_n {
        for k in 0..n {
            if aux.values[p * (n + 1) + k].abs() <= eps_zero {
                h[p * n + k] = 1.0;
            }
        }
    }
    Strategy::new("increasing_profit", 0.0, n, 1, bundle.path_ids().to_vec(), h)
}

/// Holds `λ` itself. Where `K̂` jumps to infinity its gains turn positive
/// immediately; used as the seed of [`immediate_arbitrage_combination`].
pub fn market_price_strategy(chars: &Characteristics, floor: f64) -> Result<Strategy> {
    let (p_n, n, d) = (chars.n_paths(), chars.n_steps(), chars.dim());
    let mut h = Vec::with_capacity(p_n * n * d);
    for p in 0..p_n {
        for k in 0..n {
            h.extend_from_slice(chars.lambda(p, k));
        }
    }
    Strategy::new("market_price", floor, n, d, chars.path_ids().to_vec(), h)
}

/// First grid index with `G_k > 0`, per path.
pub fn tau_est(report: &GainsReport) -> Vec<Option<usize>> {
    (0..report.n_paths()).map(|p| report.path(p).iter().position(|&g| g > 0.0)).collect()
}

/// First `m` points of the base-2 van der Corput sequence.
pub fn van_der_corput(m: usize) -> Vec<f64> {
    (1..=m as u64)
        .map(|mut i| {
            let (mut x, mut f) = (0.0, 0.5);
            while i > 0 {
                if i & 1 == 1 {
                    x += f;
                }
                i >>= 1;
                f *= 0.5;
            }
            x
        })
        .collect()
}

/// `Σ_n w_n H·1_{(τ, τ+θ_nT]}` with `w_n = 2^{-n}/(1 − 2^{-m})` and `θ_n`
/// from the van der Corput sequence.
pub fn immediate_arbitrage_combination(h_strong: &Strategy, tau: &[Option<usize>], m: usize, grid: &TimeGrid) -> Result<Strategy> {
    if m < 1 {
        return Err(Error::InvalidArgument("combination needs at least one term".into()));
    }
    immediate_arbitrage_combination_with(h_strong, tau, &van_der_corput(m), grid)
}

/// [`immediate_arbitrage_combination`] with explicit `θ_n ∈ (0, 1]`.
pub fn immediate_arbitrage_combination_with(h_strong: &Strategy, tau: &[Option<usize>], thetas: &[f64], grid: &TimeGrid) -> Result<Strategy> {
    if thetas.is_empty() {
        return Err(Error::InvalidArgument("combination needs at least one term".into()));
    }
    if thetas.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::InvalidArgument("combination lengths must lie in (0, 1]".into()));
    }
    if tau.len() != h_strong.n_paths || grid.n_steps() != h_strong.n_steps {
        return Err(Error::Misaligned("stopping times, grid and strategy differ".into()));
    }
    if h_strong.floor != 0.0 {
        return Err(Error::InvalidArgument("seed strategy must be 0-admissible".into()));
    }
    let m = thetas.len();
    let norm = 1.0 - libm::ldexp(1.0, -(m as i32));
    let weights: Vec<f64> = (1..=m).map(|j| libm::ldexp(1.0, -(j as i32)) / norm).collect();
    let (n, d) = (h_strong.n_steps, h_strong.dim);
    let t = grid.times();
    let t_end = grid.horizon();
    let mut h = vec![0.0; h_strong.h.len()];
    for (p, tp) in tau.iter().enumerate() {
        let Some(start) = *tp else { continue };
        for k in start..n {
            let w: f64 = thetas
                .iter()
                .zip(&weights)
                .filter(|(&th, _)| t[k] < (t[start] + th * t_end).min(t_end))
                .map(|(_, &w)| w)
                .sum();
            if w == 0.0 {
                continue;
            }
            for i in 0..d {
                h[(p * n + k) * d + i] = w * h_strong.h[(p * n + k) * d + i];
            }
        }
    }
    Strategy::new(format!("immediate({})", h_strong.label), 0.0, n, d, h_strong.path_ids.clone(), h)
}

/// `θⁿ = λ/Ẑ` up to the first time `K̂ ≥ level`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnboundedProfit {
    pub level: f64,
    pub strategy: Strategy,
    /// Share of paths on which `K̂` reached `level`.
    pub reached: f64,
}

impl UnboundedProfit {
    /// Stopping too rarely means the grid cannot show the divergence.
    pub fn too_slow(&self) -> bool {
        self.reached < 0.5
    }
}

pub fn unbounded_profit_sequence(chars: &Characteristics, zhat: &Deflator, levels: &[f64]) -> Result<Vec<UnboundedProfit>> {
    if zhat.n_steps() != chars.n_steps() || zhat.path_ids() != chars.path_ids() {
        return Err(Error::Misaligned("deflator and characteristics differ".into()));
    }
    let (p_n, n, d) = (chars.n_paths(), chars.n_steps(), chars.dim());
    levels
        .iter()
        .map(|&level| {
            let mut h = vec![0.0; p_n * n * d];
            let mut hits = 0usize;
            for p in 0..p_n {
                let khat = chars.khat_path(p);
                // K̂ is nondecreasing
                if khat[n] >= level {
                    hits += 1;
                }
                for k in 0..n {
                    if khat[k] >= level {
                        break;
                    }
                    let z = zhat.value(p, k);
                    if z == 0.0 {
                        break;
                    }
                    for (i, l) in chars.lambda(p, k).iter().enumerate() {
                        h[(p * n + k) * d + i] = l / z;
                    }
                }
            }
            let strategy = Strategy::new(format!("unbounded_profit({level})"), 1.0, n, d, chars.path_ids().to_vec(), h)?;
            Ok(UnboundedProfit { level, strategy, reached: hits as f64 / p_n as f64 })
        })
        .collect()
}

/// `Hⁿ = 1_{[σ_n, ϱ_n)} (Ẑ_{σ_n}/Ẑ) λ` with `σ_n` the first time `Ẑ ≤ 1/n`
/// and `ϱ_n` the first later time `Ẑ ≤ Ẑ_{σ_n}/K`.
pub fn approximate_arbitrage_sequence(chars: &Characteristics, zhat: &Deflator, k_const: f64, n_level: f64) -> Result<Strategy> {
    if zhat.n_steps() != chars.n_steps() || zhat.path_ids() != chars.path_ids() {
        return Err(Error::Misaligned("deflator and characteristics differ".into()));
    }
    if !(k_const > 1.0) || !(n_level > 1.0) {
        return Err(Error::InvalidArgument("approximate arbitrage needs K > 1 and n > 1".into()));
    }
    let (p_n, n, d) = (chars.n_paths(), chars.n_steps(), chars.dim());
    let mut h = vec![0.0; p_n * n * d];
    let mut triggered = 0usize;
    for p in 0..p_n {
        let z = zhat.path(p);
        let Some(sigma) = z[..n].iter().position(|&x| x <= 1.0 / n_level) else { continue };
        triggered += 1;
        let target = z[sigma] / k_const;
        for k in sigma..n {
            if z[k] <= target {
                break;
            }
            for (i, l) in chars.lambda(p, k).iter().enumerate() {
                h[(p * n + k) * d + i] = z[sigma] / z[k] * l;
            }
        }
    }
    if triggered == 0 {
        return Err(Error::NeverTriggered(format!("deflator never fell to 1/{n_level}")));
    }
    Strategy::new(format!("approximate_arbitrage({n_level})"), 1.0, n, d, chars.path_ids().to_vec(), h)
}

/// Replicating strategy of the bond in the three-dimensional Bessel market:
/// `V(t, S) = 2Φ(S/√(T−t)) − 1` and `φ = ∂V/∂S`. Its gains end at
/// `1 − E[Ẑ_T]` on every path.
pub fn bessel_arbitrage(bundle: &PathBundle) -> Result<(Strategy, GainsReport)> {
    if bundle.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: bundle.dim() });
    }
    let (p_n, n) = (bundle.n_paths(), bundle.n_steps());
    let rem = bundle.grid().remaining();
    let mut h = vec![0.0; p_n * n];
    for p in 0..p_n {
        for k in 0..n {
            let sq = libm::sqrt(rem[k]);
            h[p * n + k] = 2.0 * norm_pdf(bundle.price(p, k, 0) / sq) / sq;
        }
    }
    let s0 = if p_n > 0 { bundle.price(0, 0, 0) } else { 1.0 };
    let v0 = 2.0 * norm_cdf(s0 / libm::sqrt(bundle.grid().horizon())) - 1.0;
    let strategy = Strategy::new("bessel_arbitrage", v0, n, 1, bundle.path_ids().to_vec(), h)?;
    let gains = integrate(&strategy, bundle)?;
    Ok((strategy, gains))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate, ModelSpec};

    fn bs(n: usize, paths: usize) -> PathBundle {
        let g = TimeGrid::uniform(1.0, n).unwrap();
        simulate(&ModelSpec::BlackScholes { mu: 0.05, sigma: 0.2, s0: 1.0 }, &g, paths, 4).unwrap()
    }

    #[test]
    fn unit_position_telescopes() {
        let b = bs(16, 5);
        let g = integrate(&Strategy::constant(&b, 1.0, 1.0).unwrap(), &b).unwrap();
        for p in 0..5 {
            assert!((g.path(p)[16] - (b.price(p, 16, 0) - b.price(p, 0, 0))).abs() < 1e-14);
            assert_eq!(g.path(p)[0], 0.0);
        }
    }

    #[test]
    fn van_der_corput_prefix() {
        assert_eq!(van_der_corput(5), vec![0.5, 0.25, 0.75, 0.125, 0.625]);
    }

    #[test]
    fn single_full_term_recovers_seed_after_tau() {
        let b = bs(16, 3);
        let g = b.grid().clone();
        let h = Strategy::new("seed", 0.0, 16, 1, b.path_ids().to_vec(), (0..48).map(|x| x as f64).collect()).unwrap();
        let tau = vec![Some(4), None, Some(0)];
        let c = immediate_arbitrage_combination_with(&h, &tau, &[1.0], &g).unwrap();
        for k in 0..16 {
            assert_eq!(c.position(0, k)[0], if k >= 4 { h.position(0, k)[0] } else { 0.0 });
            assert_eq!(c.position(1, k)[0], 0.0);
            assert_eq!(c.position(2, k)[0], h.position(2, k)[0]);
        }
        assert!(immediate_arbitrage_combination(&h, &tau, 0, &g).is_err());
    }

    #[test]
    fn occupation_scaling_at_one() {
        assert!((occupation_scaling(1.0) - 0.8493).abs() < 1e-3);
        assert!(occupation_scaling(1e-9) < 1e-8);
    }

    #[test]
    fn misaligned_strategy_is_rejected() {
        let b = bs(16, 3);
        let h = Strategy::constant(&bs(8, 3), 1.0, 1.0).unwrap();
        assert!(matches!(integrate(&h, &b), Err(Error::Misaligned(_))));
    }
}
