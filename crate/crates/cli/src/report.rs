use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use crate::files::{read_json, write_json, InputError};

#[derive(Serialize)]
struct Summary {
    certificates: Vec<Entry>,
    metrics: Vec<Entry>,
    sweeps: Vec<Entry>,
}

#[derive(Serialize)]
struct Entry {
    source: PathBuf,
    content: Value,
}

/// Run directory plus its immediate subdirectories, sorted.
fn candidate_dirs(run: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = vec![run.to_path_buf()];
    let mut subs: Vec<PathBuf> = std::fs::read_dir(run)
        .map_err(|e| InputError(format!("{}: {e}", run.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subs.sort();
    dirs.extend(subs);
    Ok(dirs)
}

fn collect(run: &Path, dirs: &[PathBuf], name: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for d in dirs {
        let p = d.join(name);
        if p.is_file() {
            let content: Value = read_json(&p)?;
            let source = p.strip_prefix(run).unwrap_or(&p).to_path_buf();
            out.push(Entry { source, content });
        }
    }
    Ok(out)
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.4e}"),
        None => "-".into(),
    }
}

fn nums(v: &Value) -> String {
    match v.as_array() {
        Some(a) if !a.is_empty() => a.iter().map(num).collect::<Vec<_>>().join(" "),
        _ => "-".into(),
    }
}

fn markdown(s: &Summary) -> String {
    let mut md = String::from("# Run summary\n");
    if !s.certificates.is_empty() {
        md.push_str("\n## Certificates\n\n| source | theorem | status | verified | margins |\n|---|---|---|---|---|\n");
        for e in &s.certificates {
            let c = &e.content;
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                e.source.display(),
                c["theorem"].as_str().unwrap_or("-"),
                c["status"].as_str().unwrap_or("-"),
                c["verified"].as_bool().map_or("-".into(), |b| b.to_string()),
                nums(&c["certificate"]["margins"]),
            );
        }
    }
    if !s.metrics.is_empty() {
        md.push_str("\n## Observer metrics\n\n| source | observer | RMSE | extended rel. RMSE | κ̂ | M̂ | R² | peak |\n|---|---|---|---|---|---|---|---|\n");
        for e in &s.metrics {
            for o in e.content["observers"].as_array().into_iter().flatten() {
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} | {} | {} | {} | {} |",
                    e.source.display(),
                    o["label"].as_str().unwrap_or("-"),
                    nums(&o["rmse"]),
                    nums(&o["ext_rel_rmse"]),
                    num(&o["fit"]["kappa"]),
                    num(&o["fit"]["prefactor"]),
                    num(&o["fit"]["r2"]),
                    num(&o["peak_error"]),
                );
            }
        }
    }
    if !s.sweeps.is_empty() {
        md.push_str("\n## ε sweeps\n\n| source | ε | sup error | extended sup error | ratio to previous ε | extended ratio |\n|---|---|---|---|---|---|\n");
        for e in &s.sweeps {
            let rows = e.content["rows"].as_array().cloned().unwrap_or_default();
            let ratios = e.content["ratios"].as_array().cloned().unwrap_or_default();
            let ext_ratios = e.content["ext_ratios"].as_array().cloned().unwrap_or_default();
            for (k, r) in rows.iter().enumerate() {
                let prev = |v: &Vec<Value>| k.checked_sub(1).and_then(|p| v.get(p)).map_or("-".into(), nums);
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} | {} | {} |",
                    e.source.display(),
                    num(&r["eps"]),
                    nums(&r["sup_error"]),
                    nums(&r["ext_sup_error"]),
                    prev(&ratios),
                    prev(&ext_ratios),
                );
            }
        }
    }
    md
}

pub fn cmd_report(run: &Path) -> Result<ExitCode> {
    let dirs = candidate_dirs(run)?;
    let summary = Summary {
        certificates: collect(run, &dirs, "certificate.json")?,
        metrics: collect(run, &dirs, "metrics.json")?,
        sweeps: collect(run, &dirs, "sweep.json")?,
    };
    if summary.certificates.is_empty() && summary.metrics.is_empty() && summary.sweeps.is_empty() {
        eprintln!("error: no certificate.json, metrics.json or sweep.json under {}", run.display());
        return Ok(ExitCode::from(1));
    }
    std::fs::write(run.join("summary.md"), markdown(&summary))?;
    write_json(&run.join("summary.json"), &summary)?;
    println!("wrote {}", run.join("summary.md").display());
    Ok(ExitCode::SUCCESS)
}
