//! simulate → extract → deflate → strategize → classify, chunked over paths.

use std::ops::Range;

use noarb_core::characteristics::{
    detect_divergence, empirical_nu_test, extract, Characteristics, DivergenceKind, DivergenceVerdict, KhatProbes, NuTest,
};
use noarb_core::classifier::{
    classify, na1_numeraire_equivalence, nflvr_integral_test, Evidence, IntegralTest, NuEvidence, NumeraireEquivalence,
    SpectrumReport,
};
use noarb_core::deflators::{
    compose_deflator, increment_test, minimal_deflator, numeraire_change, numeraire_characteristics, tradability_check,
    Deflator, MartingaleKind, MartingaleVerdict,
};
use noarb_core::grid::TimeGrid;
use noarb_core::models::{local_time_estimate, simulate_bes3_levels, simulate_levels, ModelSpec, PathBundle};
use noarb_core::stats::{self, MeanSe};
use noarb_core::strategies::{
    approximate_arbitrage_sequence, bessel_arbitrage, immediate_arbitrage_combination, increasing_profit_strategy,
    integrate, market_price_strategy, mollification_width, occupation_scaling, tau_est, unbounded_profit_sequence,
    GainsReport,
};
use noarb_core::Error;

use crate::config::{ExperimentConfig, ModelConfig, NumeraireConfig, Task};
use crate::error::CliError;

/// `Ẑ` counts as identically one when no value strays further than this.
pub const UNIT_DEFLATOR_TOL: f64 = 1e-9;

/// Orthogonal volatility of the composed deflator `Ẑ·E(N)` checked by the
/// deflators task.
pub const COMPOSED_THETA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub n_steps: usize,
    pub khat_terminal: Option<(f64, f64, f64)>,
    pub max_relative_nu: Option<f64>,
    pub tradability_rms: Option<f64>,
    pub tradability_truncated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessVerdict {
    pub process: String,
    pub verdict: MartingaleVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeflatorSummary {
    pub mean_terminal: MeanSe,
    pub n_absorbed: usize,
    pub max_deviation_from_one: f64,
    pub verdicts: Vec<ProcessVerdict>,
    /// Per-path time-RMS of `|Ẑ·S − 1|` for the Bessel market: (median, q90, max).
    pub reciprocal_error: Option<(f64, f64, f64)>,
}

impl DeflatorSummary {
    pub fn is_identically_one(&self) -> bool {
        self.max_deviation_from_one <= UNIT_DEFLATOR_TOL
    }

    pub fn verdict(&self, process: &str) -> Option<&MartingaleVerdict> {
        self.verdicts.iter().find(|v| v.process == process).map(|v| &v.verdict)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub label: String,
    pub floor: f64,
    pub n_paths: usize,
    pub terminal: MeanSe,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub prob_positive: f64,
    pub prob_nonnegative: f64,
    pub floor_violations: usize,
    pub min_gain: f64,
    pub extras: Vec<(String, f64)>,
}

impl StrategySummary {
    pub fn extra(&self, name: &str) -> Option<f64> {
        self.extras.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumeraireSummary {
    pub label: String,
    pub flagged_paths: usize,
    pub deflator: DeflatorSummary,
    pub divergence: Option<DivergenceVerdict>,
    pub spectrum: Option<SpectrumReport>,
    pub equivalence: Option<NumeraireEquivalence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub model: String,
    pub config: ExperimentConfig,
    pub levels: Vec<LevelSummary>,
    /// `(level, [(t, q10, q50, q90)])`.
    pub khat_curves: Vec<(usize, Vec<(f64, f64, f64, f64)>)>,
    pub nu_test: Option<NuTest>,
    pub divergence: Option<DivergenceVerdict>,
    pub deflator: Option<DeflatorSummary>,
    pub strategies: Vec<StrategySummary>,
    /// `(label, [(path id, G_T)])`.
    pub terminal_gains: Vec<(String, Vec<(u64, f64)>)>,
    pub spectrum: Option<SpectrumReport>,
    pub integral_test: Option<IntegralTest>,
    pub numeraire: Option<NumeraireSummary>,
    pub invalid_paths: usize,
    pub warnings: Vec<String>,
    /// Statistical checks that failed; a run with failures exits nonzero.
    pub failures: Vec<String>,
}

#[derive(Default)]
struct GainsAcc {
    label: String,
    floor: f64,
    terminal: Vec<f64>,
    floor_violations: usize,
    min_gain: f64,
    sums: Vec<(String, f64, f64)>,
}

impl GainsAcc {
    /// Weighted running mean of a named statistic.
    fn add_stat(&mut self, name: &str, value: f64, weight: f64) {
        match self.sums.iter_mut().find(|(k, _, _)| k == name) {
            Some(e) => {
                e.1 += value * weight;
                e.2 += weight;
            }
            None => self.sums.push((name.to_string(), value * weight, weight)),
        }
    }

    fn summary(&self) -> StrategySummary {
        let mut t = self.terminal.clone();
        StrategySummary {
            label: self.label.clone(),
            floor: self.floor,
            n_paths: t.len(),
            terminal: stats::mean_se(t.iter().copied()),
            prob_positive: stats::fraction(t.iter().map(|&g| g > 0.0)),
            prob_nonnegative: stats::fraction(t.iter().map(|&g| g >= 0.0)),
            median: stats::quantile_in_place(&mut t, 0.5),
            q10: stats::quantile_in_place(&mut t, 0.1),
            q90: stats::quantile_in_place(&mut t, 0.9),
            floor_violations: self.floor_violations,
            min_gain: self.min_gain,
            extras: self.sums.iter().map(|(k, s, w)| (k.clone(), if *w > 0.0 { s / w } else { f64::NAN })).collect(),
        }
    }
}

#[derive(Default)]
struct StrategyAccs(Vec<GainsAcc>);

impl StrategyAccs {
    fn entry(&mut self, label: &str, floor: f64) -> &mut GainsAcc {
        if let Some(i) = self.0.iter().position(|a| a.label == label) {
            return &mut self.0[i];
        }
        self.0.push(GainsAcc { label: label.to_string(), floor, min_gain: f64::INFINITY, ..GainsAcc::default() });
        self.0.last_mut().expect("just pushed")
    }

    fn add(&mut self, g: &GainsReport) -> &mut GainsAcc {
        let a = self.entry(&g.label, g.floor);
        a.terminal.extend(g.terminal());
        a.floor_violations += g.floor_violations;
        a.min_gain = a.min_gain.min(g.min_gain);
        a
    }
}

/// Sampled columns of a process at the increment-test times.
struct Columns {
    idx: Vec<usize>,
    values: Vec<f64>,
}

impl Columns {
    fn new(idx: Vec<usize>) -> Self {
        Columns { idx, values: Vec::new() }
    }

    fn push_rows(&mut self, n_paths: usize, w: usize, data: &[f64]) {
        for p in 0..n_paths {
            self.values.extend(self.idx.iter().map(|&k| data[p * w + k]));
        }
    }
}

struct DeflatorAcc {
    terminal: Vec<f64>,
    n_absorbed: usize,
    max_dev: f64,
    columns: Vec<(String, Columns)>,
    reciprocal: Vec<f64>,
}

impl DeflatorAcc {
    fn new(names: &[&str], idx: &[usize]) -> Self {
        DeflatorAcc {
            terminal: Vec::new(),
            n_absorbed: 0,
            max_dev: 0.0,
            columns: names.iter().map(|n| (n.to_string(), Columns::new(idx.to_vec()))).collect(),
            reciprocal: Vec::new(),
        }
    }

    fn add_deflator(&mut self, z: &Deflator) {
        self.terminal.extend(z.terminal());
        self.n_absorbed += z.n_absorbed();
        self.max_dev = self.max_dev.max(z.max_deviation_from_one());
    }

    fn push(&mut self, name: &str, n_paths: usize, w: usize, data: &[f64]) {
        let c = &mut self.columns.iter_mut().find(|(n, _)| n == name).expect("declared column").1;
        c.push_rows(n_paths, w, data);
    }

    fn finish(self, times: &[f64], cfg: &ExperimentConfig) -> Result<DeflatorSummary, CliError> {
        let inc = cfg.thresholds.increments();
        let mut verdicts = Vec::new();
        for (name, c) in &self.columns {
            if c.values.is_empty() {
                continue;
            }
            let verdict = increment_test(&c.values, times, &inc)?;
            verdicts.push(ProcessVerdict { process: name.clone(), verdict });
        }
        let reciprocal = if self.reciprocal.is_empty() {
            None
        } else {
            let mut r = self.reciprocal;
            let max = r.iter().copied().fold(0.0, f64::max);
            Some((stats::quantile_in_place(&mut r, 0.5), stats::quantile_in_place(&mut r, 0.9), max))
        };
        Ok(DeflatorSummary {
            mean_terminal: stats::mean_se(self.terminal.iter().copied()),
            n_absorbed: self.n_absorbed,
            max_deviation_from_one: self.max_dev,
            verdicts,
            reciprocal_error: reciprocal,
        })
    }
}

/// Numéraire `V` and holdings `θ` for the configured change.
fn numeraire_value(
    choice: NumeraireConfig,
    z: &Deflator,
    ch: &Characteristics,
    b: &PathBundle,
    zero_threshold: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (p_n, n, d) = (b.n_paths(), b.n_steps(), b.dim());
    let w = n + 1;
    let mut v = vec![0.0; p_n * w];
    let mut theta = vec![0.0; p_n * n * d];
    match choice {
        NumeraireConfig::InverseDeflator => {
            for p in 0..p_n {
                for k in 0..w {
                    v[p * w + k] = 1.0 / z.value(p, k).max(zero_threshold);
                }
                for k in 0..n {
                    for (i, l) in ch.lambda(p, k).iter().enumerate() {
                        theta[(p * n + k) * d + i] = l * v[p * w + k];
                    }
                }
            }
        }
        NumeraireConfig::ConstantHolding { theta: th } => {
            for p in 0..p_n {
                for k in 0..w {
                    let s = b.price_vec(p, k);
                    let s0 = b.price_vec(p, 0);
                    v[p * w + k] = 1.0 + (0..d).map(|i| th * (s[i] - s0[i])).sum::<f64>();
                }
            }
            theta.iter_mut().for_each(|x| *x = th);
        }
    }
    (v, theta)
}

fn numeraire_label(choice: NumeraireConfig) -> String {
    match choice {
        NumeraireConfig::InverseDeflator => "inverse_deflator".into(),
        NumeraireConfig::ConstantHolding { theta } => format!("constant_holding({theta})"),
    }
}

fn chunks(n_paths: usize, chunk: usize) -> impl Iterator<Item = Range<u64>> {
    (0..n_paths.div_ceil(chunk)).map(move |i| (i * chunk) as u64..((i + 1) * chunk).min(n_paths) as u64)
}

fn simulate(cfg: &ExperimentConfig, spec: &ModelSpec, grids: &[TimeGrid], paths: Range<u64>) -> Result<Vec<PathBundle>, Error> {
    if cfg.model.is_bessel() {
        simulate_bes3_levels(spec.s0(), grids, paths, cfg.mc.master_seed)
    } else {
        simulate_levels(spec, grids, paths, cfg.mc.master_seed)
    }
}

/// Increment-test columns: the grid index at or after `T·j/windows`.
fn sample_indices(grid: &TimeGrid, windows: usize) -> Vec<usize> {
    let t_end = grid.horizon();
    let mut idx: Vec<usize> = (0..=windows).map(|j| grid.ceil_index(t_end * j as f64 / windows as f64)).collect();
    idx.dedup();
    idx
}

fn stop_index(ch: &Characteristics, z: &Deflator, p: usize, level: f64) -> usize {
    let n = ch.n_steps();
    let kh = ch.khat_path(p);
    (0..n).find(|&k| kh[k] >= level || z.value(p, k) == 0.0).unwrap_or(n)
}

#[allow(clippy::too_many_arguments)]
fn run_strategies(
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    b: &PathBundle,
    accs: &mut StrategyAccs,
    reached: &mut Vec<(f64, f64)>,
    triggered: &mut Vec<(f64, usize)>,
) -> Result<(), CliError> {
    let grid = b.grid();
    let n = b.n_steps();
    let weight = b.n_paths() as f64;
    let sc = &cfg.strategies;
    match spec {
        ModelSpec::AbsLocalMartingale { .. } => {
            let c = cfg.thresholds.eps_zero_c;
            let eps = mollification_width(c, grid);
            let dt_sqrt = (grid.horizon() / n as f64).sqrt();
            let h = increasing_profit_strategy(b, eps)?;
            let g = integrate(&h, b)?;
            let mono = g.monotonicity_violations(eps * dt_sqrt);
            let lt = local_time_estimate(b)?;
            let lt_mean = stats::mean_se(lt.terminal_tanaka()).mean;
            let a = accs.add(&g);
            a.add_stat("monotonicity_violations", mono, weight);
            a.add_stat("local_time_mean", lt_mean, weight);
            a.add_stat("occupation_scaling", occupation_scaling(c), weight);
        }
        ModelSpec::MvtJump { .. } | ModelSpec::IntegratedRatio => {
            let ch = extract(spec, b)?;
            let h = market_price_strategy(&ch, 0.0)?;
            let g = integrate(&h, b)?;
            let tau = tau_est(&g);
            let comb = immediate_arbitrage_combination(&h, &tau, sc.combination_terms, grid)?;
            let gc = integrate(&comb, b)?;
            let mid = grid.ceil_index(grid.horizon() / 2.0);
            let p_mid = stats::fraction(gc.at(mid).into_iter().map(|x| x > 0.0));
            let tau_share = stats::fraction(tau.iter().map(|t| t.is_some()));
            accs.add(&g).add_stat("prob_positive_mid", stats::fraction(g.at(mid).into_iter().map(|x| x > 0.0)), weight);
            let a = accs.add(&gc);
            a.add_stat("prob_positive_mid", p_mid, weight);
            a.add_stat("tau_found", tau_share, weight);
        }
        ModelSpec::BridgeExp { .. } => {
            let ch = extract(spec, b)?;
            let z = minimal_deflator(&ch, b, &cfg.thresholds.deflator())?;
            for up in unbounded_profit_sequence(&ch, &z, &sc.unbounded_levels)? {
                let g = integrate(&up.strategy, b)?;
                reached.push((up.level, up.reached * weight));
                accs.add(&g).add_stat("reached", up.reached, weight);
            }
            let k_const = sc.approx_k;
            let target = k_const - 1.0;
            for &lvl in &sc.approx_levels {
                let label = format!("approximate_arbitrage({lvl})");
                let g = match approximate_arbitrage_sequence(&ch, &z, k_const, lvl) {
                    Ok(h) => integrate(&h, b)?,
                    Err(Error::NeverTriggered(_)) => {
                        GainsReport::from_gains(label.clone(), 1.0, n, vec![0.0; b.n_paths() * (n + 1)])?
                    }
                    Err(e) => return Err(e.into()),
                };
                let term = g.terminal();
                let hit = stats::fraction(term.iter().map(|&x| (x - target).abs() <= 0.05 * target));
                let zt = z.terminal();
                let absorbed: Vec<f64> = term.iter().zip(&zt).filter(|(_, &zz)| zz == 0.0).map(|(&x, _)| x).collect();
                let n_trig = (0..b.n_paths()).filter(|&p| z.path(p)[..n].iter().any(|&x| x <= 1.0 / lvl)).count();
                triggered.push((lvl, n_trig));
                let a = accs.add(&g);
                a.add_stat("prob_near_k_minus_1", hit, weight);
                if !absorbed.is_empty() {
                    let ok = stats::fraction(absorbed.iter().map(|&x| (x - target).abs() <= 0.05 * target));
                    a.add_stat("prob_near_k_minus_1_given_absorbed", ok, absorbed.len() as f64);
                }
            }
        }
        ModelSpec::PowerVol { mu_exp, .. } if *mu_exp == -1.0 => {
            let (_, g) = bessel_arbitrage(b)?;
            accs.add(&g);
        }
        _ => {
            let ch = extract(spec, b)?;
            let z = minimal_deflator(&ch, b, &cfg.thresholds.deflator())?;
            for up in unbounded_profit_sequence(&ch, &z, &sc.unbounded_levels)? {
                let g = integrate(&up.strategy, b)?;
                // G_T(θⁿ) against 1/Ẑ at the stopping time, minus one
                let err: Vec<f64> = (0..b.n_paths())
                    .filter_map(|p| {
                        let k = stop_index(&ch, &z, p, up.level);
                        let zk = z.value(p, k);
                        (zk > 0.0).then(|| g.path(p)[n] - (1.0 / zk - 1.0))
                    })
                    .collect();
                let rms = stats::rms(&err);
                reached.push((up.level, up.reached * weight));
                let a = accs.add(&g);
                a.add_stat("reached", up.reached, weight);
                a.add_stat("identity_mean_square", rms * rms, err.len() as f64);
            }
        }
    }
    Ok(())
}

struct LevelAcc {
    probes: Option<KhatProbes>,
    probes_t: Option<KhatProbes>,
    max_nu: Option<f64>,
    trad_sq: f64,
    trad_n: usize,
    trad_trunc: usize,
}

fn append(slot: &mut Option<KhatProbes>, new: KhatProbes) -> Result<(), Error> {
    match slot {
        Some(p) => p.append(&new),
        None => {
            *slot = Some(new);
            Ok(())
        }
    }
}

pub fn run(cfg: &ExperimentConfig, log: &mut dyn FnMut(&str)) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let spec = cfg.model.spec();
    let side = spec.singular_side();
    let specs = cfg.grid.level_specs(side)?;
    let grids: Vec<TimeGrid> = specs.iter().map(|s| s.build()).collect::<Result<_, _>>()?;
    let probe_times = specs[0].probe_times()?;
    let finest = grids.len() - 1;
    let fgrid = &grids[finest];
    let closed = spec.has_closed_form();
    let bessel = cfg.model.is_bessel();
    let want_chars = closed && (cfg.has(Task::Characteristics) || cfg.has(Task::Classify) || cfg.has(Task::Deflators));
    let want_defl = closed && (cfg.has(Task::Deflators) || cfg.has(Task::Classify));
    let want_strat = cfg.has(Task::Strategies);
    let dcfg = cfg.thresholds.deflator();
    let sample_idx = sample_indices(fgrid, cfg.thresholds.increment_windows);
    let sample_times: Vec<f64> = sample_idx.iter().map(|&k| fgrid.times()[k]).collect();
    let numeraire = if want_defl { cfg.numeraire } else { None };

    let strat_grid = match &cfg.strategies.grid {
        Some(g) => Some(g.finest_spec(side)?.build()?),
        None => None,
    };

    let mut levels: Vec<LevelAcc> = grids
        .iter()
        .map(|_| LevelAcc { probes: None, probes_t: None, max_nu: None, trad_sq: 0.0, trad_n: 0, trad_trunc: 0 })
        .collect();
    let mut dacc = DeflatorAcc::new(&["Z", "Z*S", "Z*E(N)", "Z*E(N)*S"], &sample_idx);
    let mut tacc = DeflatorAcc::new(&["Z'", "S/V", "1/V"], &sample_idx);
    let mut flagged = 0usize;
    let mut accs = StrategyAccs::default();
    let mut reached: Vec<(f64, f64)> = Vec::new();
    let mut triggered: Vec<(f64, usize)> = Vec::new();
    let mut invalid = 0usize;
    let mut warnings = Vec::new();
    let mut terminal_ids: Vec<u64> = Vec::new();

    let need_levels = want_chars || want_defl || (want_strat && strat_grid.is_none());
    for range in chunks(cfg.mc.n_paths, cfg.mc.chunk_size) {
        log(&format!("paths {}..{}", range.start, range.end));
        if need_levels {
            let bundles = simulate(cfg, &spec, &grids, range.clone())?;
            invalid += bundles[finest].n_invalid();
            for (l, b) in bundles.iter().enumerate() {
                if !want_chars {
                    break;
                }
                let ch = extract(&spec, b)?;
                let la = &mut levels[l];
                append(&mut la.probes, KhatProbes::sample(&ch, b.grid(), &probe_times)?)?;
                la.max_nu = Some(la.max_nu.unwrap_or(0.0).max(ch.max_relative_nu()));
                if !want_defl {
                    continue;
                }
                let z = minimal_deflator(&ch, b, &dcfg)?;
                if cfg.has(Task::Deflators) {
                    let tr = tradability_check(&z, &ch, b)?;
                    la.trad_sq += tr.max_error.iter().map(|e| e * e).sum::<f64>();
                    la.trad_n += tr.max_error.len();
                    la.trad_trunc += tr.truncated.iter().filter(|&&t| t).count();
                }
                let w = b.n_steps() + 1;
                let p_n = b.n_paths();
                if l == finest {
                    dacc.add_deflator(&z);
                    dacc.push("Z", p_n, w, z.values());
                    let zs = &z.products(b)?[0];
                    dacc.push("Z*S", p_n, w, zs);
                    if cfg.has(Task::Deflators) {
                        let zc = compose_deflator(&z, b.grid(), COMPOSED_THETA)?;
                        dacc.push("Z*E(N)", p_n, w, zc.values());
                        dacc.push("Z*E(N)*S", p_n, w, &zc.products(b)?[0]);
                    }
                    if bessel {
                        for p in 0..p_n {
                            let e: Vec<f64> = zs[p * w..(p + 1) * w].iter().map(|x| x - 1.0).collect();
                            dacc.reciprocal.push(stats::rms(&e));
                        }
                    }
                }
                if let Some(choice) = numeraire {
                    let (v, theta) = numeraire_value(choice, &z, &ch, b, dcfg.zero_threshold);
                    let changed = numeraire_change(b, &v)?;
                    let ch2 = numeraire_characteristics(&ch, b, &changed, &theta, &v)?;
                    append(&mut la.probes_t, KhatProbes::sample(&ch2, b.grid(), &probe_times)?)?;
                    if l == finest {
                        flagged += changed.n_flagged();
                        let z2 = minimal_deflator(&ch2, &changed.bundle, &dcfg)?;
                        tacc.add_deflator(&z2);
                        tacc.push("Z'", p_n, w, z2.values());
                        let cb = &changed.bundle;
                        let d2 = cb.dim();
                        for i in 0..d2 {
                            let name = if i + 1 == d2 { "1/V" } else { "S/V" };
                            tacc.push(name, p_n, w, &cb.component(i));
                        }
                    }
                }
            }
            if want_strat && strat_grid.is_none() {
                terminal_ids.extend_from_slice(bundles[finest].path_ids());
                run_strategies(cfg, &spec, &bundles[finest], &mut accs, &mut reached, &mut triggered)?;
            }
        }
        if want_strat {
            if let Some(sg) = &strat_grid {
                let b = simulate(cfg, &spec, std::slice::from_ref(sg), range.clone())?.pop().expect("one grid");
                if !need_levels {
                    invalid += b.n_invalid();
                }
                terminal_ids.extend_from_slice(b.path_ids());
                run_strategies(cfg, &spec, &b, &mut accs, &mut reached, &mut triggered)?;
            }
        }
    }
    let total = cfg.mc.n_paths;
    if invalid * 100 > total {
        return Err(Error::TooManyInvalidPaths { invalid, total }.into());
    }

    let nu_test = if !closed && (cfg.has(Task::Characteristics) || cfg.has(Task::Classify)) {
        log("empirical nu test");
        let n = cfg.mc.nu_paths.min(total);
        let bundles = simulate(cfg, &spec, &grids, 0..n as u64)?;
        let refs: Vec<&PathBundle> = bundles.iter().collect();
        Some(empirical_nu_test(&refs, &cfg.thresholds.binning())?)
    } else {
        None
    };

    let level_probes: Vec<KhatProbes> = levels.iter().filter_map(|l| l.probes.clone()).collect();
    let divergence = if level_probes.len() >= 3 {
        Some(detect_divergence(&level_probes, &cfg.thresholds.divergence())?)
    } else {
        None
    };
    let khat_curves: Vec<(usize, Vec<(f64, f64, f64, f64)>)> =
        level_probes.iter().enumerate().map(|(l, p)| (l, p.quantile_curve())).collect();
    let level_summaries: Vec<LevelSummary> = levels
        .iter()
        .zip(&grids)
        .map(|(la, g)| LevelSummary {
            n_steps: g.n_steps(),
            khat_terminal: la.probes.as_ref().map(|p| {
                let (_, a, b, c) = *p.quantile_curve().last().expect("probe at T");
                (a, b, c)
            }),
            max_relative_nu: la.max_nu,
            tradability_rms: (la.trad_n > 0).then(|| (la.trad_sq / la.trad_n as f64).sqrt()),
            tradability_truncated: la.trad_trunc,
        })
        .collect();

    let mut failures = Vec::new();
    let deflator = if want_defl {
        let d = dacc.finish(&sample_times, cfg)?;
        if let Some(v) = d.verdict("Z") {
            if v.kind == MartingaleKind::Rejected {
                failures.push(format!("deflator increments drift upward (p = {:.3e})", v.p_value));
            }
        }
        Some(d)
    } else {
        None
    };

    let strategies: Vec<StrategySummary> = accs.0.iter().map(GainsAcc::summary).collect();
    let bounded = matches!(divergence.as_ref().map(|d| d.kind), Some(DivergenceKind::Converged));
    for (lvl, share) in aggregate_reached(&reached, total) {
        if share < 0.5 && !bounded {
            warnings.push(format!("K̂ reached {lvl} on only {:.1}% of paths; divergence too slow for this grid", share * 100.0));
        }
    }
    for &lvl in &cfg.strategies.approx_levels {
        let hits: usize = triggered.iter().filter(|(l, _)| *l == lvl).map(|(_, n)| n).sum();
        if matches!(spec, ModelSpec::BridgeExp { .. }) && want_strat && hits == 0 {
            warnings.push(format!("approximate arbitrage never triggered for n = {lvl}"));
        }
    }
    let terminal_gains: Vec<(String, Vec<(u64, f64)>)> = accs
        .0
        .iter()
        .map(|a| (a.label.clone(), terminal_ids.iter().copied().zip(a.terminal.iter().copied()).collect()))
        .collect();

    let integral_test = match cfg.model {
        ModelConfig::PowerVol { mu_exp, .. } => Some(nflvr_integral_test(mu_exp)),
        _ => None,
    };

    let spectrum = if cfg.has(Task::Classify) {
        let nu = match &nu_test {
            Some(t) => NuEvidence::Empirical(t.clone()),
            None => NuEvidence::ClosedForm { max_relative_nu: levels[finest].max_nu.unwrap_or(0.0) },
        };
        let mut ev = Evidence::new(spec.name(), nu);
        ev.divergence = divergence.clone();
        if let Some(d) = &deflator {
            ev.deflator_mean = Some(d.mean_terminal);
            ev.deflator_is_one = d.is_identically_one();
        }
        for s in &strategies {
            ev.strategy_stats.push((format!("{} P(G_T>0)", s.label), s.prob_positive));
            ev.strategy_stats.push((format!("{} mean G_T", s.label), s.terminal.mean));
        }
        Some(classify(Some(&spec), &ev, &cfg.thresholds.classifier())?)
    } else {
        None
    };

    let numeraire_summary = match numeraire {
        Some(choice) => {
            let probes: Vec<KhatProbes> = levels.iter().filter_map(|l| l.probes_t.clone()).collect();
            let div = if probes.len() >= 3 { Some(detect_divergence(&probes, &cfg.thresholds.divergence())?) } else { None };
            let d = tacc.finish(&sample_times, cfg)?;
            let (spectrum_t, equivalence) = match &spectrum {
                Some(orig) => {
                    let mut ev = Evidence::new(format!("{}/V", spec.name()), NuEvidence::ClosedForm { max_relative_nu: 0.0 });
                    ev.divergence = div.clone();
                    ev.deflator_mean = Some(d.mean_terminal);
                    ev.deflator_is_one = d.is_identically_one();
                    let rep = classify(None, &ev, &cfg.thresholds.classifier())?;
                    let eq = match na1_numeraire_equivalence(orig, &rep) {
                        Ok(eq) => Some(eq),
                        Err(e) => {
                            failures.push(format!("numeraire change altered NA1: {e}"));
                            None
                        }
                    };
                    (Some(rep), eq)
                }
                None => (None, None),
            };
            Some(NumeraireSummary {
                label: numeraire_label(choice),
                flagged_paths: flagged,
                deflator: d,
                divergence: div,
                spectrum: spectrum_t,
                equivalence,
            })
        }
        None => None,
    };

    Ok(RunOutput {
        model: spec.name().to_string(),
        config: cfg.clone(),
        levels: level_summaries,
        khat_curves,
        nu_test,
        divergence,
        deflator,
        strategies,
        terminal_gains,
        spectrum,
        integral_test,
        numeraire: numeraire_summary,
        invalid_paths: invalid,
        warnings,
        failures,
    })
}

fn aggregate_reached(reached: &[(f64, f64)], total: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &(lvl, w) in reached {
        match out.iter_mut().find(|(l, _)| *l == lvl) {
            Some(e) => e.1 += w,
            None => out.push((lvl, w)),
        }
    }
    out.iter_mut().for_each(|e| e.1 /= total as f64);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ranges_cover_paths() {
        let r: Vec<_> = chunks(10, 4).collect();
        assert_eq!(r, vec![0..4, 4..8, 8..10]);
    }

    #[test]
    fn sample_indices_hit_window_bounds() {
        let g = TimeGrid::uniform(1.0, 64).unwrap();
        assert_eq!(sample_indices(&g, 8), vec![0, 8, 16, 24, 32, 40, 48, 56, 64]);
    }
}
