//! Output files. Every file is written to a temporary name and renamed into
//! place, and listed in `manifest.toml`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use noarb_core::characteristics::DivergenceKind;
use noarb_core::classifier::{Condition, IntegralTest, SpectrumReport};
use noarb_core::stats;

use crate::error::CliError;
use crate::pipeline::{DeflatorSummary, RunOutput};

pub const VERSION: &str = env!("NOARB_VERSION");

/// Writes `bytes` to `dir/name` via a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn divergence_label(kind: DivergenceKind) -> String {
    match kind {
        DivergenceKind::Converged => "converged".into(),
        DivergenceKind::DivergesAtTerminal => "diverges_at_terminal".into(),
        DivergenceKind::JumpsToInfinityAt(t) => format!("jumps_to_infinity_at({t})"),
    }
}

/// One CSV row per model: verdicts plus a basis flag per condition.
pub fn spectrum_row(rep: &SpectrumReport) -> Vec<String> {
    let mut row = vec![rep.model.clone()];
    row.extend(Condition::ALL.iter().map(|&c| rep.get(c).verdict.as_str().to_string()));
    row.extend(Condition::ALL.iter().map(|&c| rep.get(c).basis.as_str().to_string()));
    row
}

pub const SPECTRUM_HEADER: [&str; 9] =
    ["model", "NIP", "NSA", "NA1", "NFLVR", "NIP_basis", "NSA_basis", "NA1_basis", "NFLVR_basis"];

pub fn spectrum_text(rep: &SpectrumReport) -> String {
    let mut s = format!("model: {}\n", rep.model);
    for c in Condition::ALL {
        let r = rep.get(c);
        s.push_str(&format!("{:<6} {:<12} [{}] {}\n", c.as_str(), r.verdict.as_str(), r.basis.as_str(), r.note));
    }
    s.push_str("evidence:\n");
    for l in rep.evidence_lines() {
        s.push_str(&format!("  {l}\n"));
    }
    s
}

fn verdict_rows(model: &str, prefix: &str, d: &DeflatorSummary, rows: &mut Vec<Vec<String>>) {
    for v in &d.verdicts {
        rows.push(vec![
            model.to_string(),
            format!("{prefix}{}", v.process),
            v.verdict.kind.as_str().to_string(),
            num(v.verdict.mean_terminal.mean),
            num(v.verdict.mean_terminal.se),
            num(v.verdict.p_value),
        ]);
    }
}

/// Plain-text summary printed by `run` and stored as `summary.txt`.
pub fn summary_text(out: &RunOutput) -> String {
    let mut s = format!("model {} ({} paths, seed {})\n", out.model, out.config.mc.n_paths, out.config.mc.master_seed);
    for l in &out.levels {
        s.push_str(&format!("  level n={}", l.n_steps));
        if let Some((_, q50, _)) = l.khat_terminal {
            s.push_str(&format!("  median K̂_T={q50:.6}"));
        }
        if let Some(nu) = l.max_relative_nu {
            s.push_str(&format!("  max|ν|={nu:.2e}"));
        }
        if let Some(t) = l.tradability_rms {
            s.push_str(&format!("  tradability rms={t:.3e}"));
        }
        s.push('\n');
    }
    if let Some(t) = &out.nu_test {
        for l in &t.levels {
            s.push_str(&format!("  ν-residual n={}: {:.4} ({}/{} bins)\n", l.n_steps, l.fraction, l.bins_used, l.bins_total));
        }
    }
    if let Some(d) = &out.divergence {
        s.push_str(&format!("  divergence: {} ratios {:?}\n", divergence_label(d.kind), d.ratios));
    }
    if let Some(d) = &out.deflator {
        s.push_str(&format!(
            "  E[Ẑ_T] = {:.6} ± {:.6}, absorbed {}\n",
            d.mean_terminal.mean, d.mean_terminal.se, d.n_absorbed
        ));
        for v in &d.verdicts {
            s.push_str(&format!("    {:<10} {} (p = {:.3e})\n", v.process, v.verdict.kind.as_str(), v.verdict.p_value));
        }
        if let Some((med, q90, max)) = d.reciprocal_error {
            s.push_str(&format!("  |Ẑ·S − 1| path RMS: median {med:.2e}, q90 {q90:.2e}, max {max:.2e}\n"));
        }
    }
    for st in &out.strategies {
        s.push_str(&format!(
            "  {:<28} mean {:.4} ± {:.4}  median {:.4}  P(>0) {:.4}  floor violations {}  min {:.4}\n",
            st.label, st.terminal.mean, st.terminal.se, st.median, st.prob_positive, st.floor_violations, st.min_gain
        ));
        for (k, v) in &st.extras {
            if v.abs() < 1e-3 && *v != 0.0 {
                s.push_str(&format!("      {k} = {v:.4e}\n"));
            } else {
                s.push_str(&format!("      {k} = {v:.6}\n"));
            }
        }
    }
    if let Some(t) = out.integral_test {
        s.push_str(&format!("  integral test: {}\n", integral_label(t)));
    }
    if let Some(r) = &out.spectrum {
        s.push_str(&format!("  verdicts: {}\n", spectrum_row(r)[1..5].join(" ")));
    }
    if let Some(n) = &out.numeraire {
        s.push_str(&format!("  numeraire {}: flagged paths {}\n", n.label, n.flagged_paths));
        if let Some(r) = &n.spectrum {
            s.push_str(&format!("    verdicts after change: {}\n", spectrum_row(r)[1..5].join(" ")));
        }
    }
    for w in &out.warnings {
        s.push_str(&format!("  warning: {w}\n"));
    }
    for f in &out.failures {
        s.push_str(&format!("  FAILED: {f}\n"));
    }
    s
}

pub fn integral_label(t: IntegralTest) -> &'static str {
    match t {
        IntegralTest::StrictLocal => "strict_local",
        IntegralTest::TrueMartingaleCandidate => "true_martingale_candidate",
    }
}

fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let lo = stats::quantile(values, 0.005);
    let hi = stats::quantile(values, 0.995);
    if !(hi > lo) {
        return vec![(lo, hi, values.len())];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v <= hi {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    counts.into_iter().enumerate().map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c)).collect()
}

/// Writes every artifact of `out` into `dir`, then the manifest.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<String>, CliError> {
    let mut files: Vec<String> = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
        write_atomic(dir, name, &bytes)?;
        files.push(name.to_string());
        Ok(())
    };
    put("summary.txt", summary_text(out).into_bytes())?;

    let rows = out
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let (a, b, c) = l.khat_terminal.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            let nu_frac = out.nu_test.as_ref().and_then(|t| t.levels.get(i)).map_or(f64::NAN, |x| x.fraction);
            vec![
                i.to_string(),
                l.n_steps.to_string(),
                num(a),
                num(b),
                num(c),
                num(l.max_relative_nu.unwrap_or(f64::NAN)),
                num(nu_frac),
                num(l.tradability_rms.unwrap_or(f64::NAN)),
                l.tradability_truncated.to_string(),
            ]
        })
        .collect();
    put(
        "levels.csv",
        csv_bytes(
            &["level", "n_steps", "khat_T_q10", "khat_T_q50", "khat_T_q90", "max_relative_nu", "nu_residual_fraction", "tradability_rms", "tradability_truncated"],
            rows,
        )?,
    )?;

    if !out.khat_curves.is_empty() {
        let mut rows = Vec::new();
        let mut dat = String::from("# level time q10 q50 q90\n");
        for (l, curve) in &out.khat_curves {
            for &(t, a, b, c) in curve {
                rows.push(vec![l.to_string(), num(t), num(a), num(b), num(c)]);
                dat.push_str(&format!("{l} {t} {a} {b} {c}\n"));
            }
            dat.push_str("\n\n");
        }
        put("khat_curves.csv", csv_bytes(&["level", "time", "q10", "q50", "q90"], rows)?)?;
        put("khat_curves.dat", dat.into_bytes())?;
    }

    let mut vrows = Vec::new();
    if let Some(d) = &out.deflator {
        verdict_rows(&out.model, "", d, &mut vrows);
    }
    if let Some(n) = &out.numeraire {
        verdict_rows(&out.model, &format!("{}:", n.label), &n.deflator, &mut vrows);
    }
    if !vrows.is_empty() {
        put("deflator_verdicts.csv", csv_bytes(&["model", "process", "kind", "mean_terminal", "se", "p_value"], vrows)?)?;
    }

    if !out.strategies.is_empty() {
        let rows = out
            .strategies
            .iter()
            .map(|s| {
                vec![
                    s.label.clone(),
                    s.n_paths.to_string(),
                    num(s.terminal.mean),
                    num(s.terminal.se),
                    num(s.median),
                    num(s.q10),
                    num(s.q90),
                    num(s.prob_positive),
                    num(s.prob_nonnegative),
                    num(s.floor),
                    s.floor_violations.to_string(),
                    num(s.min_gain),
                ]
            })
            .collect();
        put(
            "gains_summary.csv",
            csv_bytes(
                &["strategy", "n_paths", "mean", "se", "median", "q10", "q90", "p_positive", "p_nonnegative", "floor", "floor_violations", "min_gain"],
                rows,
            )?,
        )?;
        let rows = out
            .strategies
            .iter()
            .flat_map(|s| s.extras.iter().map(move |(k, v)| vec![s.label.clone(), k.clone(), num(*v)]))
            .collect();
        put("gains_stats.csv", csv_bytes(&["strategy", "statistic", "value"], rows)?)?;
        let rows = out
            .terminal_gains
            .iter()
            .flat_map(|(l, g)| g.iter().map(move |(p, v)| vec![l.clone(), p.to_string(), num(*v)]))
            .collect();
        put("gains_terminal.csv", csv_bytes(&["strategy", "path", "g_T"], rows)?)?;
        let mut dat = String::from("# strategy bin_lo bin_hi count\n");
        for (l, g) in &out.terminal_gains {
            let v: Vec<f64> = g.iter().map(|x| x.1).collect();
            for (a, b, c) in histogram(&v, 40) {
                dat.push_str(&format!("{l} {a} {b} {c}\n"));
            }
            dat.push_str("\n\n");
        }
        put("gains_hist.dat", dat.into_bytes())?;
    }

    let mut srows = Vec::new();
    let mut text = String::new();
    if let Some(r) = &out.spectrum {
        srows.push(spectrum_row(r));
        text.push_str(&spectrum_text(r));
        if let Some(t) = out.integral_test {
            text.push_str(&format!("nflvr integral test: {}\n", integral_label(t)));
        }
    }
    if let Some(r) = out.numeraire.as_ref().and_then(|n| n.spectrum.as_ref()) {
        srows.push(spectrum_row(r));
        text.push_str(&format!("\nafter numeraire change {}\n", out.numeraire.as_ref().expect("present").label));
        text.push_str(&spectrum_text(r));
    }
    if !srows.is_empty() {
        put("spectrum.csv", csv_bytes(&SPECTRUM_HEADER, srows)?)?;
        put("spectrum.txt", text.into_bytes())?;
    }

    let manifest = manifest_text(out, &files);
    write_atomic(dir, "manifest.toml", manifest.as_bytes())?;
    files.push("manifest.toml".into());
    Ok(files)
}

pub fn manifest_text(out: &RunOutput, files: &[String]) -> String {
    let mut run = toml::Table::new();
    run.insert("version".into(), VERSION.into());
    run.insert("model".into(), out.model.clone().into());
    run.insert("master_seed".into(), toml::Value::Integer(out.config.mc.master_seed as i64));
    run.insert("files".into(), toml::Value::Array(files.iter().map(|f| f.clone().into()).collect()));
    let mut top = toml::Table::new();
    top.insert("run".into(), toml::Value::Table(run));
    let mut cfg = out.config.clone();
    cfg.output_dir = None;
    top.insert("config".into(), toml::Value::try_from(&cfg).expect("config serializes"));
    toml::to_string(&top).expect("manifest serializes")
}
