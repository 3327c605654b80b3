//! Markdown summaries of run records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::grid::Ablation;
use crate::record::RunRecord;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Column {
    ablation: Ablation,
    z_sizes: String,
    init_obs: String,
}

fn z_order(label: &str) -> (Vec<usize>, String) {
    let parts = label.split('x').filter_map(|p| p.parse().ok()).collect();
    (parts, label.to_string())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Best `J_exact` per cell; ties keep the lowest seed.
fn better(candidate: &RunRecord, incumbent: &RunRecord) -> bool {
    candidate.j_exact > incumbent.j_exact
        || (candidate.j_exact == incumbent.j_exact && candidate.seed < incumbent.seed)
}

/// Renders one table per environment: rows are horizons, columns are
/// ablation × `|Z^i|` (ablations ordered CPI-only, RS-only, neither, RS-CPI),
/// cells the best `J_exact` over seeds and hyperparameters. Returns `None`
/// when there are no records.
pub fn render_report(records: &[RunRecord]) -> Option<String> {
    if records.is_empty() {
        return None;
    }
    let mut envs: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        envs.entry(r.env.as_str()).or_default().push(r);
    }
    let mut out = String::new();
    for (env, runs) in &envs {
        let _ = writeln!(out, "## {env}\n");
        let mut columns: Vec<Column> = Vec::new();
        let mut best: BTreeMap<(usize, usize), &RunRecord> = BTreeMap::new();
        let mut by_column: Vec<(Column, &RunRecord)> = Vec::new();
        for r in runs {
            let ablation = Ablation::from_label(&r.ablation).unwrap_or(Ablation::RsCpi);
            let col = Column {
                ablation,
                z_sizes: r.z_sizes.clone(),
                init_obs: r.init_obs_mode.clone(),
            };
            if !columns.contains(&col) {
                columns.push(col.clone());
            }
            by_column.push((col, r));
        }
        columns.sort_by(|a, b| {
            (a.ablation, z_order(&a.z_sizes), &a.init_obs).cmp(&(b.ablation, z_order(&b.z_sizes), &b.init_obs))
        });
        let modes: Vec<&str> = {
            let mut m: Vec<&str> = columns.iter().map(|c| c.init_obs.as_str()).collect();
            m.dedup();
            m
        };
        for (col, r) in &by_column {
            let c = columns.iter().position(|x| x == col).expect("column");
            let cell = best.entry((r.horizon, c)).or_insert(r);
            if better(r, cell) {
                *cell = r;
            }
        }
        let horizons: Vec<usize> = {
            let mut h: Vec<usize> = runs.iter().map(|r| r.horizon).collect();
            h.sort_unstable();
            h.dedup();
            h
        };
        let heading = |c: &Column| {
            let mut s = format!("{} Z={}", c.ablation.heading(), c.z_sizes);
            if modes.len() > 1 {
                let _ = write!(s, " ({})", c.init_obs);
            }
            s
        };
        let _ = write!(out, "| T |");
        for c in &columns {
            let _ = write!(out, " {} |", heading(c));
        }
        let _ = write!(out, "\n|---|");
        for _ in &columns {
            let _ = write!(out, "---|");
        }
        out.push('\n');
        for &t in &horizons {
            let _ = write!(out, "| {t} |");
            for c in 0..columns.len() {
                match best.get(&(t, c)) {
                    Some(r) => {
                        let _ = write!(out, " {:.2} |", r.j_exact);
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        if modes.len() == 1 {
            let _ = writeln!(out, "\nInitial observation mode: {}", modes[0]);
        }

        let _ = writeln!(out, "\n### Best runs\n");
        let _ = writeln!(out, "| T | column | J_exact | lambda0 | alpha | anneal_sweeps | seed | sweeps |");
        let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
        for ((t, c), r) in &best {
            let _ = writeln!(
                out,
                "| {t} | {} | {:.16e} | {} | {} | {} | {} | {} |",
                heading(&columns[*c]),
                r.j_exact,
                r.lambda0,
                r.alpha,
                r.anneal_sweeps,
                r.seed,
                r.sweeps
            );
        }

        let _ = writeln!(out, "\n### Runtime and memory\n");
        let _ = writeln!(out, "| T | column | runs | wall time ms | sweeps | peak floats |");
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        let mut groups: BTreeMap<(usize, usize), Vec<&RunRecord>> = BTreeMap::new();
        for (col, r) in &by_column {
            let c = columns.iter().position(|x| x == col).expect("column");
            groups.entry((r.horizon, c)).or_default().push(r);
        }
        for ((t, c), rs) in &groups {
            let wall: Vec<f64> = rs.iter().map(|r| r.wall_time_ms).collect();
            let sweeps: Vec<f64> = rs.iter().map(|r| r.sweeps as f64).collect();
            let floats: Vec<f64> = rs.iter().map(|r| r.peak_floats as f64).collect();
            let (wm, ws) = mean_std(&wall);
            let (sm, ss) = mean_std(&sweeps);
            let (fm, fs) = mean_std(&floats);
            let _ = writeln!(
                out,
                "| {t} | {} | {} | {wm:.2} ± {ws:.2} | {sm:.1} ± {ss:.1} | {fm:.0} ± {fs:.0} |",
                heading(&columns[*c]),
                rs.len()
            );
        }
        out.push('\n');
    }
    Some(out)
}
