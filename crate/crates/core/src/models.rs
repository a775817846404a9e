//! Model zoo and path simulation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::grid::{SingularSide, TimeGrid};
use crate::rng::{Domain, NormalStream};
use crate::{Error, Result};

/// Absorbing floor for [`ModelSpec::PowerVol`] paths.
pub const POWER_VOL_FLOOR: f64 = 1e-8;

/// Share of invalid paths above which a run is rejected.
pub const MAX_INVALID_FRACTION: f64 = 0.01;

/// A coefficient `f(t, s)` of a scalar diffusion.
#[derive(Debug, Clone, Copy)]
pub enum Coefficient {
    /// `scale · s^exponent`
    Power { scale: f64, exponent: f64 },
    Func(fn(f64, f64) -> f64),
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Coefficient::Power { scale: c, exponent: 0.0 }
    }

    pub fn eval(&self, t: f64, s: f64) -> f64 {
        match *self {
            Coefficient::Power { scale, exponent } => {
                if exponent == 0.0 {
                    scale
                } else {
                    scale * libm::pow(s, exponent)
                }
            }
            Coefficient::Func(f) => f(t, s),
        }
    }
}

/// One market model of the zoo. All variants are one-dimensional.
#[derive(Debug, Clone, Copy)]
pub enum ModelSpec {
    /// `dS = μS dt + σS dW`, sampled exactly.
    BlackScholes { mu: f64, sigma: f64, s0: f64 },
    /// `dS = drift(t,S) dt + vol(t,S) dW`, Euler–Maruyama.
    Diffusion { drift: Coefficient, vol: Coefficient, s0: f64 },
    /// `S = |N|` with `N = n0 + vol·W`.
    AbsLocalMartingale { vol: f64, n0: f64 },
    /// `S = M + ⟨M⟩^β_{·∧τ} + (⟨M⟩_{·∨τ} − ⟨M⟩_τ)^γ` with `M = W` and a
    /// deterministic `τ`.
    MvtJump { beta: f64, gamma: f64, tau: f64 },
    /// `S_t = W_t + ∫₀ᵗ W_u/u du`.
    IntegratedRatio,
    /// `S = exp(X)`, `X` a Brownian bridge from 0 to `k` over the horizon.
    BridgeExp { k: f64 },
    /// `dS = Sσ(S)² dt + Sσ(S) dW` with `σ(x) = x^mu_exp`.
    PowerVol { mu_exp: f64, s0: f64 },
}

/// Local state handed to the closed-form characteristics.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub t: f64,
    pub t_next: f64,
    /// `T - t`, exact.
    pub remaining: f64,
    pub horizon: f64,
    pub price: &'a [f64],
    /// Value of the model's auxiliary series at `t` (NaN if it has none).
    pub aux: f64,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::BlackScholes { .. } => "black_scholes",
            ModelSpec::Diffusion { .. } => "diffusion",
            ModelSpec::AbsLocalMartingale { .. } => "abs_local_martingale",
            ModelSpec::MvtJump { .. } => "mvt_jump",
            ModelSpec::IntegratedRatio => "integrated_ratio",
            ModelSpec::BridgeExp { .. } => "bridge_exp",
            ModelSpec::PowerVol { .. } => "power_vol",
        }
    }

    pub fn dim(&self) -> usize {
        1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        match *self {
            ModelSpec::BlackScholes { mu, sigma, s0 } => {
                if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) {
                    return bad("black_scholes needs finite mu and sigma >= 0");
                }
                if !(s0 > 0.0 && s0.is_finite()) {
                    return bad("black_scholes needs s0 > 0");
                }
            }
            ModelSpec::Diffusion { s0, .. } => {
                if !s0.is_finite() {
                    return bad("diffusion needs a finite s0");
                }
            }
            ModelSpec::AbsLocalMartingale { vol, n0 } => {
                if !(vol.is_finite() && vol >= 0.0 && n0.is_finite()) {
                    return bad("abs_local_martingale needs vol >= 0 and finite n0");
                }
            }
            ModelSpec::MvtJump { beta, gamma, tau } => {
                if !(gamma > 0.0 && gamma <= 0.5 && beta > 0.5 && beta.is_finite()) {
                    return bad("mvt_jump needs 0 < gamma <= 1/2 < beta");
                }
                if !(tau >= 0.0 && tau.is_finite()) {
                    return bad("mvt_jump needs tau >= 0");
                }
            }
            ModelSpec::IntegratedRatio => {}
            ModelSpec::BridgeExp { k } => {
                if !(k > 0.0 && k.is_finite()) {
                    return bad("bridge_exp needs k > 0");
                }
            }
            ModelSpec::PowerVol { mu_exp, s0 } => {
                if !mu_exp.is_finite() {
                    return bad("power_vol needs a finite exponent");
                }
                if !(s0 > 0.0 && s0.is_finite()) {
                    return bad("power_vol needs s0 > 0");
                }
            }
        }
        Ok(())
    }

    pub fn s0(&self) -> f64 {
        match *self {
            ModelSpec::BlackScholes { s0, .. } | ModelSpec::Diffusion { s0, .. } | ModelSpec::PowerVol { s0, .. } => s0,
            ModelSpec::AbsLocalMartingale { n0, .. } => n0.abs(),
            ModelSpec::MvtJump { .. } | ModelSpec::IntegratedRatio => 0.0,
            ModelSpec::BridgeExp { .. } => 1.0,
        }
    }

    /// Whether `a` and `c` are available in closed form.
    pub fn has_closed_form(&self) -> bool {
        !matches!(self, ModelSpec::AbsLocalMartingale { .. })
    }

    /// Name of the auxiliary series the simulator records.
    pub fn aux_name(&self) -> Option<&'static str> {
        match self {
            ModelSpec::AbsLocalMartingale { .. } => Some("N"),
            ModelSpec::IntegratedRatio => Some("W"),
            ModelSpec::BridgeExp { .. } => Some("gap"),
            _ => None,
        }
    }

    /// Where the mean-variance trade-off concentrates, if anywhere.
    pub fn singular_side(&self) -> Option<SingularSide> {
        match *self {
            ModelSpec::IntegratedRatio => Some(SingularSide::Initial),
            ModelSpec::MvtJump { tau, .. } if tau == 0.0 => Some(SingularSide::Initial),
            ModelSpec::BridgeExp { .. } => Some(SingularSide::Terminal),
            _ => None,
        }
    }

    fn mvt_compensator(beta: f64, gamma: f64, tau: f64, t: f64) -> f64 {
        let before = libm::pow(t.min(tau), beta);
        let after = t.max(tau) - tau;
        let after = if after > 0.0 { libm::pow(after, gamma) } else { 0.0 };
        before + after
    }

    /// Drift rate `a` and diffusion rate `c` (row-major `d × d`) relative to
    /// `dB = dt` on the step starting at `ctx.t`.
    ///
    /// The deterministic compensator of [`ModelSpec::MvtJump`] is spread
    /// evenly over the step, so `a·Δt` reproduces its exact increment and no
    /// rate is evaluated at the singular point itself.
    pub fn characteristics(&self, ctx: &StepContext<'_>, a: &mut [f64], c: &mut [f64]) -> Result<()> {
        let s = ctx.price[0];
        let (drift, diff) = match *self {
            ModelSpec::BlackScholes { mu, sigma, .. } => (mu * s, sigma * sigma * s * s),
            ModelSpec::Diffusion { drift, vol, .. } => {
                let v = vol.eval(ctx.t, s);
                (drift.eval(ctx.t, s), v * v)
            }
            ModelSpec::AbsLocalMartingale { .. } => {
                return Err(Error::Structural("abs_local_martingale carries a singular local-time drift"))
            }
            ModelSpec::MvtJump { beta, gamma, tau } => {
                let f0 = Self::mvt_compensator(beta, gamma, tau, ctx.t);
                let f1 = Self::mvt_compensator(beta, gamma, tau, ctx.t_next);
                ((f1 - f0) / (ctx.t_next - ctx.t), 1.0)
            }
            ModelSpec::IntegratedRatio => {
                let a = if ctx.t > 0.0 { ctx.aux / ctx.t } else { 0.0 };
                (a, 1.0)
            }
            ModelSpec::BridgeExp { .. } => {
                let g = ctx.aux / ctx.remaining + 0.5;
                (s * g, s * s)
            }
            ModelSpec::PowerVol { mu_exp, .. } => {
                let sig = libm::pow(s, mu_exp);
                (s * sig * sig, s * s * sig * sig)
            }
        };
        a[0] = drift;
        c[0] = diff;
        Ok(())
    }

    /// Antiderivative `Λ(S)` of a time-homogeneous `λ(S)`, when known in
    /// closed form. Lets the deflator integrate `∫λ dS` through Itô's formula.
    pub fn lambda_potential(&self, s: f64) -> Option<f64> {
        if !(s > 0.0) {
            return None;
        }
        match *self {
            ModelSpec::BlackScholes { mu, sigma, .. } if sigma > 0.0 => Some(mu / (sigma * sigma) * libm::log(s)),
            ModelSpec::PowerVol { .. } => Some(libm::log(s)),
            _ => None,
        }
    }

    /// Derivative of `λ` along the martingale direction, used by the
    /// second-order deflator scheme. `None` when unavailable.
    pub fn lambda_sensitivity(&self, ctx: &StepContext<'_>) -> Option<f64> {
        let s = ctx.price[0];
        match *self {
            ModelSpec::BlackScholes { mu, sigma, .. } => {
                if sigma > 0.0 {
                    Some(-mu / (sigma * sigma * s * s))
                } else {
                    None
                }
            }
            ModelSpec::Diffusion { drift, vol, .. } => {
                let lam = |x: f64| {
                    let v = vol.eval(ctx.t, x);
                    drift.eval(ctx.t, x) / (v * v)
                };
                let h = 1e-5 * s.abs().max(1e-3);
                let d = (lam(s + h) - lam(s - h)) / (2.0 * h);
                d.is_finite().then_some(d)
            }
            ModelSpec::AbsLocalMartingale { .. } => None,
            ModelSpec::MvtJump { .. } => Some(0.0),
            ModelSpec::IntegratedRatio => Some(if ctx.t > 0.0 { 1.0 / ctx.t } else { 0.0 }),
            ModelSpec::BridgeExp { .. } => {
                let g = ctx.aux / ctx.remaining + 0.5;
                Some(-g / (s * s) - 1.0 / (s * s * ctx.remaining))
            }
            // λ = 1/S whatever the exponent
            ModelSpec::PowerVol { .. } => Some(-1.0 / (s * s)),
        }
    }
}

/// A named per-path, per-time auxiliary array (`n_paths × (n_steps+1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct AuxSeries {
    pub name: &'static str,
    pub values: Vec<f64>,
}

/// Ensemble of simulated paths, immutable once built.
///
/// Layouts are row-major: prices `path × time × component`, noise
/// `path × step × driver`, auxiliary series `path × time`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    grid: TimeGrid,
    dim: usize,
    noise_dim: usize,
    path_ids: Vec<u64>,
    prices: Vec<f64>,
    noise: Vec<f64>,
    aux: Option<AuxSeries>,
    absorbed: Vec<bool>,
    master_seed: u64,
    n_invalid: usize,
}

impl PathBundle {
    /// Assembles a bundle from raw arrays, checking shapes and finiteness.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        grid: TimeGrid,
        dim: usize,
        noise_dim: usize,
        path_ids: Vec<u64>,
        prices: Vec<f64>,
        noise: Vec<f64>,
        aux: Option<AuxSeries>,
        master_seed: u64,
    ) -> Result<Self> {
        let p = path_ids.len();
        let n = grid.n_steps();
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if prices.len() != p * (n + 1) * dim {
            return Err(Error::DimensionMismatch { expected: p * (n + 1) * dim, got: prices.len() });
        }
        if noise.len() != p * n * noise_dim {
            return Err(Error::DimensionMismatch { expected: p * n * noise_dim, got: noise.len() });
        }
        if let Some(a) = &aux {
            if a.values.len() != p * (n + 1) {
                return Err(Error::DimensionMismatch { expected: p * (n + 1), got: a.values.len() });
            }
        }
        if prices.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("prices must be finite".into()));
        }
        Ok(PathBundle {
            grid,
            dim,
            noise_dim,
            path_ids,
            prices,
            noise,
            aux,
            absorbed: vec![false; p],
            master_seed,
            n_invalid: 0,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn n_paths(&self) -> usize {
        self.path_ids.len()
    }
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }
    /// Global path indices (the RNG stream of each path).
    pub fn path_ids(&self) -> &[u64] {
        &self.path_ids
    }
    /// Paths dropped because stepping produced NaN or overflow.
    pub fn n_invalid(&self) -> usize {
        self.n_invalid
    }
    /// Paths that touched the absorbing floor.
    pub fn absorbed(&self) -> &[bool] {
        &self.absorbed
    }
    pub fn prices(&self) -> &[f64] {
        &self.prices
    }
    pub fn noise(&self) -> &[f64] {
        &self.noise
    }
    pub fn aux(&self) -> Option<&AuxSeries> {
        self.aux.as_ref()
    }

    /// All components of path `p`, `(n_steps+1) × dim`.
    pub fn path(&self, p: usize) -> &[f64] {
        let w = (self.n_steps() + 1) * self.dim;
        &self.prices[p * w..(p + 1) * w]
    }

    pub fn price(&self, p: usize, k: usize, i: usize) -> f64 {
        self.prices[(p * (self.n_steps() + 1) + k) * self.dim + i]
    }

    pub fn price_vec(&self, p: usize, k: usize) -> &[f64] {
        let off = (p * (self.n_steps() + 1) + k) * self.dim;
        &self.prices[off..off + self.dim]
    }

    pub fn path_noise(&self, p: usize) -> &[f64] {
        let w = self.n_steps() * self.noise_dim;
        &self.noise[p * w..(p + 1) * w]
    }

    pub fn aux_path(&self, p: usize) -> Option<&[f64]> {
        let w = self.n_steps() + 1;
        self.aux.as_ref().map(|a| &a.values[p * w..(p + 1) * w])
    }

    /// Requires the auxiliary series `name`.
    pub fn require_aux(&self, name: &'static str) -> Result<&AuxSeries> {
        match &self.aux {
            Some(a) if a.name == name => Ok(a),
            _ => Err(Error::MissingAux(name)),
        }
    }

    /// Component `i` of every path, `n_paths × (n_steps+1)`.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.prices.iter().skip(i).step_by(self.dim).copied().collect()
    }
}

/// Path generator: a zoo model or the exact three-dimensional Bessel scheme.
#[derive(Debug, Clone, Copy)]
enum Engine<'a> {
    Model(&'a ModelSpec),
    Bes3 { r0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PathStatus {
    Ok,
    Absorbed,
    Invalid,
}

impl Engine<'_> {
    fn noise_dim(&self) -> usize {
        match self {
            Engine::Model(_) => 1,
            Engine::Bes3 { .. } => 3,
        }
    }

    fn aux_name(&self) -> Option<&'static str> {
        match self {
            Engine::Model(m) => m.aux_name(),
            Engine::Bes3 { .. } => None,
        }
    }

    /// Fills one path given its Brownian increments.
    fn run(&self, grid: &TimeGrid, dw: &[f64], prices: &mut [f64], aux: &mut [f64]) -> PathStatus {
        let n = grid.n_steps();
        let times = grid.times();
        let mut status = PathStatus::Ok;
        match *self {
            Engine::Bes3 { r0 } => {
                let mut x = [r0, 0.0, 0.0];
                prices[0] = r0;
                for k in 0..n {
                    for (j, xj) in x.iter_mut().enumerate() {
                        *xj += dw[3 * k + j];
                    }
                    prices[k + 1] = libm::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
                }
            }
            Engine::Model(spec) => match *spec {
                ModelSpec::BlackScholes { mu, sigma, s0 } => {
                    let drift = mu - 0.5 * sigma * sigma;
                    prices[0] = s0;
                    let mut s = s0;
                    for k in 0..n {
                        s *= libm::exp(drift * grid.dt(k) + sigma * dw[k]);
                        prices[k + 1] = s;
                    }
                }
                ModelSpec::Diffusion { drift, vol, s0 } => {
                    prices[0] = s0;
                    let mut s = s0;
                    for k in 0..n {
                        s += drift.eval(times[k], s) * grid.dt(k) + vol.eval(times[k], s) * dw[k];
                        prices[k + 1] = s;
                    }
                }
                ModelSpec::PowerVol { mu_exp, s0 } => {
                    prices[0] = s0;
                    let mut s = s0;
                    for k in 0..n {
                        if status != PathStatus::Absorbed {
                            let sig = libm::pow(s, mu_exp);
                            s += s * sig * sig * grid.dt(k) + s * sig * dw[k];
                            if s <= POWER_VOL_FLOOR {
                                s = POWER_VOL_FLOOR;
                                status = PathStatus::Absorbed;
                            }
                        }
                        prices[k + 1] = s;
                    }
                }
                ModelSpec::AbsLocalMartingale { vol, n0 } => {
                    let mut x = n0;
                    aux[0] = x;
                    prices[0] = x.abs();
                    for k in 0..n {
                        x += vol * dw[k];
                        aux[k + 1] = x;
                        prices[k + 1] = x.abs();
                    }
                }
                ModelSpec::IntegratedRatio => {
                    let (mut w, mut acc) = (0.0, 0.0);
                    aux[0] = 0.0;
                    prices[0] = 0.0;
                    for k in 0..n {
                        // the drift integral starts at t_1
                        if times[k] > 0.0 {
                            acc += w / times[k] * grid.dt(k);
                        }
                        w += dw[k];
                        aux[k + 1] = w;
                        prices[k + 1] = w + acc;
                    }
                }
                ModelSpec::MvtJump { beta, gamma, tau } => {
                    let mut w = 0.0;
                    prices[0] = ModelSpec::mvt_compensator(beta, gamma, tau, 0.0);
                    for k in 0..n {
                        w += dw[k];
                        prices[k + 1] = w + ModelSpec::mvt_compensator(beta, gamma, tau, times[k + 1]);
                    }
                }
                ModelSpec::BridgeExp { k: level } => {
                    let t_end = grid.horizon();
                    let rem = grid.remaining();
                    // aux temporarily holds W_T - W_t
                    aux[n] = 0.0;
                    for k in (0..n).rev() {
                        aux[k] = aux[k + 1] + dw[k];
                    }
                    let w_t = aux[0];
                    for k in 0..=n {
                        aux[k] = if k == 0 {
                            level
                        } else if k == n {
                            0.0
                        } else {
                            (rem[k] / t_end) * (level - w_t) + aux[k]
                        };
                        prices[k] = libm::exp(level - aux[k]);
                    }
                    prices[0] = 1.0;
                }
            },
        }
        if prices.iter().any(|x| !x.is_finite()) {
            return PathStatus::Invalid;
        }
        status
    }
}

struct PathResult {
    levels: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    status: PathStatus,
}

fn run_paths<F>(paths: Range<u64>, f: F) -> Vec<PathResult>
where
    F: Fn(u64) -> PathResult + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        paths.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        paths.map(f).collect()
    }
}

fn simulate_engine(
    engine: Engine<'_>,
    grids: &[TimeGrid],
    paths: Range<u64>,
    master_seed: u64,
) -> Result<Vec<PathBundle>> {
    let finest = grids.last().ok_or_else(|| Error::InvalidArgument("no grid given".into()))?;
    if finest.n_steps() < 2 {
        return Err(Error::InvalidGrid("n_steps must be at least 2".into()));
    }
    let embeddings: Vec<Vec<usize>> = grids.iter().map(|g| g.embedding_in(finest)).collect::<Result<_>>()?;
    let kdim = engine.noise_dim();
    let nf = finest.n_steps();
    let sqrt_dt: Vec<f64> = (0..nf).map(|k| libm::sqrt(finest.dt(k))).collect();
    let has_aux = engine.aux_name().is_some();

    let results = run_paths(paths.clone(), |path| {
        let mut stream = NormalStream::new(master_seed, Domain::Price, path, kdim);
        let mut fine = vec![0.0; nf * kdim];
        for (k, step) in fine.chunks_mut(kdim).enumerate() {
            stream.fill_step(step);
            step.iter_mut().for_each(|z| *z *= sqrt_dt[k]);
        }
        let mut status = PathStatus::Ok;
        let mut levels = Vec::with_capacity(grids.len());
        for (g, emb) in grids.iter().zip(&embeddings) {
            let n = g.n_steps();
            let mut dw = vec![0.0; n * kdim];
            for k in 0..n {
                for j in emb[k]..emb[k + 1] {
                    for d in 0..kdim {
                        dw[k * kdim + d] += fine[j * kdim + d];
                    }
                }
            }
            let mut prices = vec![0.0; n + 1];
            let mut aux = if has_aux { vec![0.0; n + 1] } else { Vec::new() };
            match engine.run(g, &dw, &mut prices, &mut aux) {
                PathStatus::Invalid => status = PathStatus::Invalid,
                PathStatus::Absorbed if status == PathStatus::Ok => status = PathStatus::Absorbed,
                _ => {}
            }
            levels.push((prices, dw, aux));
        }
        PathResult { levels, status }
    });

    let total = results.len();
    let invalid = results.iter().filter(|r| r.status == PathStatus::Invalid).count();
    if invalid as f64 > MAX_INVALID_FRACTION * total as f64 {
        return Err(Error::TooManyInvalidPaths { invalid, total });
    }
    let mut out = Vec::with_capacity(grids.len());
    for (li, g) in grids.iter().enumerate() {
        let n = g.n_steps();
        let kept = total - invalid;
        let mut ids = Vec::with_capacity(kept);
        let mut prices = Vec::with_capacity(kept * (n + 1));
        let mut noise = Vec::with_capacity(kept * n * kdim);
        let mut aux = Vec::with_capacity(if has_aux { kept * (n + 1) } else { 0 });
        let mut absorbed = Vec::with_capacity(kept);
        for (r, id) in results.iter().zip(paths.clone()) {
            if r.status == PathStatus::Invalid {
                continue;
            }
            let (p, w, a) = &r.levels[li];
            ids.push(id);
            prices.extend_from_slice(p);
            noise.extend_from_slice(w);
            aux.extend_from_slice(a);
            absorbed.push(r.status == PathStatus::Absorbed);
        }
        out.push(PathBundle {
            grid: g.clone(),
            dim: 1,
            noise_dim: kdim,
            path_ids: ids,
            prices,
            noise,
            aux: engine.aux_name().map(|name| AuxSeries { name, values: aux }),
            absorbed,
            master_seed,
            n_invalid: invalid,
        });
    }
    Ok(out)
}

/// Simulates `n_paths` paths of `spec` on `grid`.
///
/// Black–Scholes and the bridge are sampled exactly, diffusions and power-vol
/// models by Euler–Maruyama. Path `i` always uses RNG stream `i`, so the
/// result does not depend on chunking or worker count.
pub fn simulate(spec: &ModelSpec, grid: &TimeGrid, n_paths: usize, master_seed: u64) -> Result<PathBundle> {
    simulate_range(spec, grid, 0..n_paths as u64, master_seed)
}

/// Like [`simulate`] for the global path indices in `paths`.
pub fn simulate_range(spec: &ModelSpec, grid: &TimeGrid, paths: Range<u64>, master_seed: u64) -> Result<PathBundle> {
    spec.validate()?;
    let mut v = simulate_engine(Engine::Model(spec), core::slice::from_ref(grid), paths, master_seed)?;
    Ok(v.pop().expect("one level"))
}

/// Simulates nested grids (coarse to fine) on shared Brownian increments:
/// noise is drawn on the finest grid and summed over each coarse step.
pub fn simulate_levels(spec: &ModelSpec, grids: &[TimeGrid], paths: Range<u64>, master_seed: u64) -> Result<Vec<PathBundle>> {
    spec.validate()?;
    simulate_engine(Engine::Model(spec), grids, paths, master_seed)
}

/// Exact three-dimensional Bessel process: the norm of a 3-d Brownian motion
/// started at `(r0, 0, 0)`. Equals [`ModelSpec::PowerVol`] with exponent −1.
pub fn simulate_bes3(r0: f64, grid: &TimeGrid, n_paths: usize, master_seed: u64) -> Result<PathBundle> {
    let mut v = simulate_bes3_levels(r0, core::slice::from_ref(grid), 0..n_paths as u64, master_seed)?;
    Ok(v.pop().expect("one level"))
}

pub fn simulate_bes3_levels(r0: f64, grids: &[TimeGrid], paths: Range<u64>, master_seed: u64) -> Result<Vec<PathBundle>> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidSpec(format!("bes3 needs r0 > 0, got {r0}")));
    }
    simulate_engine(Engine::Bes3 { r0 }, grids, paths, master_seed)
}

/// Local-time estimates at level 0 of the underlying `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTime {
    /// `|N_t| − |N_0| − Σ sign(N_u) ΔN_u`, clamped at 0.
    pub tanaka: Vec<f64>,
    /// `sup_{s≤t} (−|N_0| − Σ_{u<s} sign(N_u) ΔN_u)⁺`.
    pub skorohod: Vec<f64>,
    pub n_steps: usize,
}

impl LocalTime {
    pub fn terminal_tanaka(&self) -> Vec<f64> {
        self.tanaka.iter().skip(self.n_steps).step_by(self.n_steps + 1).copied().collect()
    }
    pub fn terminal_skorohod(&self) -> Vec<f64> {
        self.skorohod.iter().skip(self.n_steps).step_by(self.n_steps + 1).copied().collect()
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Tanaka and Skorohod estimators of the local time at 0, per path and time.
pub fn local_time_estimate(bundle: &PathBundle) -> Result<LocalTime> {
    let aux = bundle.require_aux("N")?;
    let n = bundle.n_steps();
    let w = n + 1;
    let mut tanaka = vec![0.0; aux.values.len()];
    let mut skorohod = vec![0.0; aux.values.len()];
    for p in 0..bundle.n_paths() {
        let x = &aux.values[p * w..(p + 1) * w];
        let start = x[0].abs();
        let (mut mart, mut sup) = (0.0f64, 0.0f64);
        for k in 0..=n {
            if k > 0 {
                mart += sign0(x[k - 1]) * (x[k] - x[k - 1]);
            }
            sup = sup.max(-start - mart);
            tanaka[p * w + k] = (x[k].abs() - start - mart).max(0.0);
            skorohod[p * w + k] = sup;
        }
    }
    Ok(LocalTime { tanaka, skorohod, n_steps: n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_black_scholes_is_constant() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let b = simulate(&ModelSpec::BlackScholes { mu: 0.0, sigma: 0.0, s0: 1.0 }, &g, 10, 3).unwrap();
        assert!(b.prices().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn bridge_pins_terminal_level() {
        let g = TimeGrid::uniform(1.0, 64).unwrap();
        let b = simulate(&ModelSpec::BridgeExp { k: 1.0 }, &g, 50, 9).unwrap();
        let gap = b.require_aux("gap").unwrap();
        for p in 0..b.n_paths() {
            assert_eq!(gap.values[p * 65 + 64], 0.0);
            assert_eq!(b.price(p, 64, 0), libm::exp(1.0));
            assert_eq!(b.price(p, 0, 0), 1.0);
        }
    }

    #[test]
    fn chunks_reproduce_whole_run() {
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let spec = ModelSpec::PowerVol { mu_exp: -0.5, s0: 1.0 };
        let all = simulate(&spec, &g, 20, 5).unwrap();
        let tail = simulate_range(&spec, &g, 12..20, 5).unwrap();
        assert_eq!(&all.prices()[12 * 33..], tail.prices());
        assert_eq!(tail.path_ids()[0], 12);
    }

    #[test]
    fn coarse_level_sums_fine_noise() {
        let g0 = TimeGrid::uniform(1.0, 4).unwrap();
        let g1 = TimeGrid::uniform(1.0, 8).unwrap();
        let spec = ModelSpec::BlackScholes { mu: 0.1, sigma: 0.3, s0: 1.0 };
        let lv = simulate_levels(&spec, &[g0.clone(), g1], 0..3, 2).unwrap();
        for p in 0..3 {
            for k in 0..4 {
                let fine = lv[1].path_noise(p)[2 * k] + lv[1].path_noise(p)[2 * k + 1];
                assert_eq!(lv[0].path_noise(p)[k], fine);
            }
        }
        let bad = simulate_levels(&spec, &[TimeGrid::uniform(1.0, 3).unwrap(), g0], 0..3, 2);
        assert!(matches!(bad, Err(Error::NotNested)));
    }

    #[test]
    fn zero_vol_local_time_vanishes() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let b = simulate(&ModelSpec::AbsLocalMartingale { vol: 0.0, n0: 0.0 }, &g, 4, 1).unwrap();
        let lt = local_time_estimate(&b).unwrap();
        assert!(lt.tanaka.iter().chain(&lt.skorohod).all(|&x| x == 0.0));
        let bs = simulate(&ModelSpec::BlackScholes { mu: 0.0, sigma: 0.1, s0: 1.0 }, &g, 4, 1).unwrap();
        assert_eq!(local_time_estimate(&bs), Err(Error::MissingAux("N")));
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::MvtJump { beta: 0.4, gamma: 0.5, tau: 0.0 }.validate().is_err());
        assert!(ModelSpec::MvtJump { beta: 1.0, gamma: 0.6, tau: 0.0 }.validate().is_err());
        assert!(ModelSpec::BridgeExp { k: 0.0 }.validate().is_err());
        assert!(ModelSpec::BlackScholes { mu: 0.0, sigma: 0.2, s0: -1.0 }.validate().is_err());
    }

    #[test]
    fn power_vol_absorbs_at_floor() {
        // unit steps: each Euler step crosses zero with probability ~2%
        let g = TimeGrid::uniform(8.0, 8).unwrap();
        let b = simulate(&ModelSpec::PowerVol { mu_exp: 0.0, s0: 1.0 }, &g, 400, 4).unwrap();
        assert!(b.absorbed().iter().any(|&a| a));
        assert!(b.prices().iter().all(|&x| x >= POWER_VOL_FLOOR));
    }
}
