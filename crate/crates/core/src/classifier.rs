//! Three-valued verdicts on NIP, NSA, NA1 and NFLVR.
//!
//! Analytic facts about a model take precedence; numeric evidence fills the
//! rest and is always reported. Verdicts must respect
//! `NFLVR ⇒ NA1 ⇒ NSA ⇒ NIP`; a report that would violate it is an error,
//! never reconciled.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::characteristics::{DivergenceKind, DivergenceVerdict, NuTest};
use crate::models::ModelSpec;
use crate::stats::MeanSe;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Analytic,
    Numeric,
}

impl Basis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Basis::Analytic => "analytic",
            Basis::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Nip,
    Nsa,
    Na1,
    Nflvr,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::Nip, Condition::Nsa, Condition::Na1, Condition::Nflvr];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Nip => "NIP",
            Condition::Nsa => "NSA",
            Condition::Na1 => "NA1",
            Condition::Nflvr => "NFLVR",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub verdict: Verdict,
    pub basis: Basis,
    pub note: String,
}

fn report(verdict: Verdict, basis: Basis, note: impl Into<String>) -> ConditionReport {
    ConditionReport { verdict, basis, note: note.into() }
}

/// Outcome of the integral test for `σ(x) = x^μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralTest {
    StrictLocal,
    TrueMartingaleCandidate,
}

/// `∫_x^∞ 1/(yσ²(1/y)) dy` with `σ(x) = x^μ` has integrand `y^{2μ−1}`, which
/// is integrable at infinity exactly when `μ < 0`.
pub fn nflvr_integral_test(mu_exp: f64) -> IntegralTest {
    if mu_exp < 0.0 {
        IntegralTest::StrictLocal
    } else {
        IntegralTest::TrueMartingaleCandidate
    }
}

/// How the orthogonal part `ν` was assessed.
#[derive(Debug, Clone, PartialEq)]
pub enum NuEvidence {
    /// Largest relative `|ν|` from closed-form characteristics.
    ClosedForm { max_relative_nu: f64 },
    /// Residual fractions on refinement levels.
    Empirical(NuTest),
}

/// Everything [`classify`] looks at.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub model: String,
    pub nu: NuEvidence,
    pub divergence: Option<DivergenceVerdict>,
    /// `E[Ẑ_T]` on the finest level.
    pub deflator_mean: Option<MeanSe>,
    /// `Ẑ ≡ 1` on every path, i.e. `λ ≡ 0`.
    pub deflator_is_one: bool,
    /// The filtration is generated by the driving Brownian motion, so `Ẑ`
    /// is the only deflator and `E[Ẑ_T] = 1` decides NFLVR.
    pub brownian_complete: bool,
    /// Named statistics of strategies that were run, for the report only.
    pub strategy_stats: Vec<(String, f64)>,
}

impl Evidence {
    pub fn new(model: impl Into<String>, nu: NuEvidence) -> Self {
        Evidence {
            model: model.into(),
            nu,
            divergence: None,
            deflator_mean: None,
            deflator_is_one: false,
            brownian_complete: true,
            strategy_stats: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// Residual fractions below this pass NIP.
    pub nip_gray_low: f64,
    /// ... at or above this fail it.
    pub nip_gray_high: f64,
    /// Relative `|ν|` treated as zero for closed-form characteristics.
    pub nu_tol: f64,
    /// Standard errors separating `E[Ẑ_T]` from 1.
    pub nflvr_sigmas: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { nip_gray_low: 0.05, nip_gray_high: 0.3, nu_tol: 1e-9, nflvr_sigmas: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub model: String,
    pub nip: ConditionReport,
    pub nsa: ConditionReport,
    pub na1: ConditionReport,
    pub nflvr: ConditionReport,
    pub evidence: Evidence,
}

impl SpectrumReport {
    pub fn get(&self, c: Condition) -> &ConditionReport {
        match c {
            Condition::Nip => &self.nip,
            Condition::Nsa => &self.nsa,
            Condition::Na1 => &self.na1,
            Condition::Nflvr => &self.nflvr,
        }
    }

    pub fn verdicts(&self) -> [Verdict; 4] {
        Condition::ALL.map(|c| self.get(c).verdict)
    }

    /// Human-readable evidence lines.
    pub fn evidence_lines(&self) -> Vec<String> {
        let ev = &self.evidence;
        let mut out = Vec::new();
        match &ev.nu {
            NuEvidence::ClosedForm { max_relative_nu } => out.push(format!("max relative |nu| = {max_relative_nu:e}")),
            NuEvidence::Empirical(t) => {
                for l in &t.levels {
                    out.push(format!("nu residual fraction at n={}: {:.4} ({}/{} bins)", l.n_steps, l.fraction, l.bins_used, l.bins_total));
                }
            }
        }
        if let Some(d) = &ev.divergence {
            out.push(format!("divergence: {:?} ({:?}), ratios {:?} on [{}, {}]", d.kind, d.confidence, d.ratios, d.interval.0, d.interval.1));
        }
        if let Some(m) = ev.deflator_mean {
            out.push(format!("E[Z_T] = {:.6} +/- {:.6} (n = {})", m.mean, m.se, m.n));
        }
        for (k, v) in &ev.strategy_stats {
            out.push(format!("{k} = {v}"));
        }
        out
    }
}

fn and(a: Verdict, b: Verdict) -> Verdict {
    match (a, b) {
        (Verdict::Fails, _) | (_, Verdict::Fails) => Verdict::Fails,
        (Verdict::Holds, Verdict::Holds) => Verdict::Holds,
        _ => Verdict::Inconclusive,
    }
}

/// Checks `NFLVR ⇒ NA1 ⇒ NSA ⇒ NIP` in both directions of failure.
pub fn check_chain(verdicts: [Verdict; 4]) -> Result<()> {
    for i in 0..3 {
        let (weak, strong) = (verdicts[i], verdicts[i + 1]);
        if strong == Verdict::Holds && weak != Verdict::Holds {
            return Err(Error::ChainViolation(format!(
                "{} holds but {} is {}",
                Condition::ALL[i + 1].as_str(),
                Condition::ALL[i].as_str(),
                weak.as_str()
            )));
        }
        if weak == Verdict::Fails && strong != Verdict::Fails {
            return Err(Error::ChainViolation(format!(
                "{} fails but {} is {}",
                Condition::ALL[i].as_str(),
                Condition::ALL[i + 1].as_str(),
                strong.as_str()
            )));
        }
    }
    Ok(())
}

fn nip_from(ev: &Evidence, cfg: &ClassifierConfig) -> ConditionReport {
    match &ev.nu {
        NuEvidence::ClosedForm { max_relative_nu } => {
            if *max_relative_nu <= cfg.nu_tol {
                report(Verdict::Holds, Basis::Analytic, "a = c lambda exactly")
            } else {
                report(Verdict::Fails, Basis::Analytic, format!("nonzero nu ({max_relative_nu:e}) off the range of c"))
            }
        }
        NuEvidence::Empirical(t) => {
            let finest = t.finest().fraction;
            if t.levels.iter().all(|l| l.fraction >= cfg.nip_gray_high) {
                report(Verdict::Fails, Basis::Numeric, format!("residual fraction >= {} at every level", cfg.nip_gray_high))
            } else if finest < cfg.nip_gray_low {
                report(Verdict::Holds, Basis::Numeric, format!("residual fraction {finest:.4} at the finest level"))
            } else {
                report(Verdict::Inconclusive, Basis::Numeric, format!("residual fraction {finest:.4} in the gray zone"))
            }
        }
    }
}

fn divergence_reports(ev: &Evidence) -> (ConditionReport, ConditionReport) {
    match &ev.divergence {
        None if ev.deflator_is_one => (
            report(Verdict::Holds, Basis::Numeric, "K-hat identically 0"),
            report(Verdict::Holds, Basis::Numeric, "K-hat identically 0"),
        ),
        None => (
            report(Verdict::Inconclusive, Basis::Numeric, "no refinement evidence"),
            report(Verdict::Inconclusive, Basis::Numeric, "no refinement evidence"),
        ),
        Some(d) => match d.kind {
            DivergenceKind::JumpsToInfinityAt(t) => (
                report(Verdict::Fails, Basis::Numeric, format!("K-hat jumps to infinity at t = {t}")),
                report(Verdict::Fails, Basis::Numeric, "K-hat infinite before T"),
            ),
            DivergenceKind::DivergesAtTerminal => (
                report(Verdict::Holds, Basis::Numeric, "K-hat finite before T"),
                report(Verdict::Fails, Basis::Numeric, "K-hat diverges at T"),
            ),
            DivergenceKind::Converged => (
                report(Verdict::Holds, Basis::Numeric, "K-hat converges under refinement"),
                report(Verdict::Holds, Basis::Numeric, "K-hat converges under refinement"),
            ),
        },
    }
}

/// Analytic facts about zoo models, when any are known.
struct Analytic {
    all_hold: Option<String>,
    nflvr: Option<ConditionReport>,
}

fn analytic_facts(spec: Option<&ModelSpec>) -> Analytic {
    let none = Analytic { all_hold: None, nflvr: None };
    let Some(spec) = spec else { return none };
    match *spec {
        ModelSpec::BlackScholes { mu, sigma, .. } if sigma > 0.0 => {
            let lam = mu / sigma;
            Analytic {
                all_hold: Some(format!("constant lambda, Novikov bound (mu/sigma)^2 T per unit horizon = {}", lam * lam)),
                nflvr: None,
            }
        }
        ModelSpec::PowerVol { mu_exp, .. } => match nflvr_integral_test(mu_exp) {
            IntegralTest::StrictLocal => Analytic {
                all_hold: None,
                nflvr: Some(report(Verdict::Fails, Basis::Analytic, "integral test: deflator is a strict local martingale")),
            },
            IntegralTest::TrueMartingaleCandidate => Analytic {
                all_hold: None,
                nflvr: Some(report(Verdict::Holds, Basis::Analytic, "integral test: deflator is a true martingale")),
            },
        },
        _ => none,
    }
}

/// Combines analytic rules and numeric evidence into a [`SpectrumReport`].
pub fn classify(spec: Option<&ModelSpec>, evidence: &Evidence, cfg: &ClassifierConfig) -> Result<SpectrumReport> {
    let facts = analytic_facts(spec);
    let nip = nip_from(evidence, cfg);
    let (nsa_raw, na1_raw) = divergence_reports(evidence);
    let nsa = ConditionReport { verdict: and(nip.verdict, nsa_raw.verdict), ..nsa_raw };
    let na1 = ConditionReport { verdict: and(nsa.verdict, na1_raw.verdict), ..na1_raw };
    let numeric_nflvr = if evidence.deflator_is_one {
        report(Verdict::Holds, Basis::Numeric, "deflator identically 1")
    } else if !evidence.brownian_complete {
        report(Verdict::Inconclusive, Basis::Numeric, "filtration not Brownian-complete")
    } else {
        match evidence.deflator_mean {
            None => report(Verdict::Inconclusive, Basis::Numeric, "no deflator estimate"),
            Some(m) if m.mean < 1.0 - cfg.nflvr_sigmas * m.se => {
                report(Verdict::Fails, Basis::Numeric, format!("E[Z_T] = {:.4} below 1 by {:.1} SE", m.mean, (1.0 - m.mean) / m.se))
            }
            Some(m) => report(
                Verdict::Inconclusive,
                Basis::Numeric,
                format!("E[Z_T] = {:.4} within {} SE of 1", m.mean, cfg.nflvr_sigmas),
            ),
        }
    };
    let nflvr_basis = facts.nflvr.unwrap_or(numeric_nflvr);
    let nflvr = ConditionReport { verdict: and(na1.verdict, nflvr_basis.verdict), ..nflvr_basis };
    let mut rep = SpectrumReport { model: evidence.model.clone(), nip, nsa, na1, nflvr, evidence: evidence.clone() };

    if let Some(why) = facts.all_hold {
        // analytic precedence: every condition holds, numeric evidence must agree
        for c in Condition::ALL {
            let r = rep.get(c);
            if r.verdict == Verdict::Fails {
                return Err(Error::ChainViolation(format!("{} fails numerically but holds analytically: {}", c.as_str(), r.note)));
            }
        }
        let holds = || report(Verdict::Holds, Basis::Analytic, why.clone());
        rep.nip = holds();
        rep.nsa = holds();
        rep.na1 = holds();
        rep.nflvr = holds();
    } else if rep.nflvr.verdict == Verdict::Holds {
        // NFLVR implies the weaker conditions
        for r in [&mut rep.nip, &mut rep.nsa, &mut rep.na1] {
            if r.verdict == Verdict::Inconclusive {
                *r = report(Verdict::Holds, Basis::Analytic, "implied by NFLVR");
            }
        }
    }
    if let Some(ModelSpec::PowerVol { mu_exp, .. }) = spec {
        if nflvr_integral_test(*mu_exp) == IntegralTest::StrictLocal && rep.nflvr.verdict == Verdict::Holds {
            return Err(Error::ChainViolation("NFLVR holds for a strict local martingale deflator".to_string()));
        }
    }
    check_chain(rep.verdicts())?;
    Ok(rep)
}

/// NA1 on `S` against NA1 on `(S/V, 1/V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumeraireEquivalence {
    pub original_na1: Verdict,
    pub transformed_na1: Verdict,
    pub transformed_nflvr: Verdict,
}

impl NumeraireEquivalence {
    pub fn identical_na1(&self) -> bool {
        self.original_na1 == self.transformed_na1
    }
}

pub fn na1_numeraire_equivalence(original: &SpectrumReport, transformed: &SpectrumReport) -> Result<NumeraireEquivalence> {
    let out = NumeraireEquivalence {
        original_na1: original.na1.verdict,
        transformed_na1: transformed.na1.verdict,
        transformed_nflvr: transformed.nflvr.verdict,
    };
    if !out.identical_na1() {
        return Err(Error::ChainViolation(format!(
            "NA1 is {} for {} but {} after the numeraire change",
            out.original_na1.as_str(),
            original.model,
            out.transformed_na1.as_str()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Verdict::*;

    #[test]
    fn integral_test_signs() {
        assert_eq!(nflvr_integral_test(-1.0), IntegralTest::StrictLocal);
        assert_eq!(nflvr_integral_test(-0.5), IntegralTest::StrictLocal);
        assert_eq!(nflvr_integral_test(0.0), IntegralTest::TrueMartingaleCandidate);
    }

    #[test]
    fn chain_rules() {
        assert!(check_chain([Holds, Holds, Holds, Holds]).is_ok());
        assert!(check_chain([Fails, Fails, Fails, Fails]).is_ok());
        assert!(check_chain([Holds, Holds, Fails, Fails]).is_ok());
        assert!(check_chain([Holds, Inconclusive, Inconclusive, Fails]).is_ok());
        assert!(check_chain([Holds, Fails, Holds, Fails]).is_err());
        assert!(check_chain([Inconclusive, Holds, Holds, Holds]).is_err());
        assert!(check_chain([Fails, Inconclusive, Fails, Fails]).is_err());
    }

    #[test]
    fn closed_form_nu_decides_nip() {
        let ev = Evidence::new("x", NuEvidence::ClosedForm { max_relative_nu: 1.0 });
        let r = classify(None, &ev, &ClassifierConfig::default()).unwrap();
        assert_eq!(r.verdicts(), [Fails; 4]);
        assert_eq!(r.nip.basis, Basis::Analytic);
    }

    #[test]
    fn unit_deflator_holds_everything() {
        let mut ev = Evidence::new("x", NuEvidence::ClosedForm { max_relative_nu: 0.0 });
        ev.deflator_is_one = true;
        let r = classify(None, &ev, &ClassifierConfig::default()).unwrap();
        assert_eq!(r.verdicts(), [Holds; 4]);
    }

    #[test]
    fn strict_local_never_holds() {
        let mut ev = Evidence::new("pv", NuEvidence::ClosedForm { max_relative_nu: 0.0 });
        ev.deflator_is_one = true;
        let spec = ModelSpec::PowerVol { mu_exp: -1.0, s0: 1.0 };
        let r = classify(Some(&spec), &ev, &ClassifierConfig::default()).unwrap();
        assert_eq!(r.nflvr.verdict, Fails);
    }
}
