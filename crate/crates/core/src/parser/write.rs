//! Canonical single-entry serialization.

use std::fmt::Write as _;

use super::compile::{DpomdpTables, RewardCell};

fn names_or_count(names: &[String]) -> String {
    let generated = names.iter().enumerate().all(|(k, n)| *n == k.to_string());
    if generated {
        names.len().to_string()
    } else {
        names.join(" ")
    }
}

fn joint(names: &[Vec<String>], parts: &[usize]) -> String {
    parts
        .iter()
        .zip(names)
        .map(|(&k, ns)| ns[k].as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes `tables` with one line per nonzero kernel entry. Numbers use the
/// shortest round-trip representation, so reading the output back yields
/// bitwise-identical tables.
pub fn write_dpomdp(tables: &DpomdpTables) -> String {
    let mut out = String::new();
    let acts = tables.joint_actions();
    let obs = tables.joint_observations();
    let ns = tables.state_count();
    let (na, ny) = (acts.size(), obs.size());
    let states = &tables.state_names;
    let _ = writeln!(out, "agents: {}", names_or_count(&tables.agent_names));
    let _ = writeln!(out, "discount: {}", tables.discount);
    let _ = writeln!(out, "values: reward");
    let _ = writeln!(out, "states: {}", names_or_count(states));
    let _ = writeln!(out, "start:");
    let start: Vec<String> = tables.start.iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "{}", start.join(" "));
    let _ = writeln!(out, "actions:");
    for names in &tables.action_names {
        let _ = writeln!(out, "{}", names_or_count(names));
    }
    let _ = writeln!(out, "observations:");
    for names in &tables.observation_names {
        let _ = writeln!(out, "{}", names_or_count(names));
    }
    let action_label: Vec<String> = (0..na)
        .map(|a| joint(&tables.action_names, &acts.decode(a)))
        .collect();
    let obs_label: Vec<String> = (0..ny)
        .map(|y| joint(&tables.observation_names, &obs.decode(y)))
        .collect();
    for s in 0..ns {
        for a in 0..na {
            for sp in 0..ns {
                let p = tables.transition[(s * na + a) * ns + sp];
                if p != 0.0 {
                    let _ = writeln!(out, "T: {} : {} : {} : {p}", action_label[a], states[s], states[sp]);
                }
            }
        }
    }
    for a in 0..na {
        for sp in 0..ns {
            for y in 0..ny {
                let p = tables.observation[(a * ns + sp) * ny + y];
                if p != 0.0 {
                    let _ = writeln!(out, "O: {} : {} : {} : {p}", action_label[a], states[sp], obs_label[y]);
                }
            }
        }
    }
    let any_obs = vec!["*"; tables.observation_names.len()].join(" ");
    for s in 0..ns {
        for a in 0..na {
            match &tables.reward[s * na + a] {
                RewardCell::Const(v) => {
                    if *v != 0.0 || v.is_sign_negative() {
                        let _ = writeln!(out, "R: {} : {} : * : {any_obs} : {v}", action_label[a], states[s]);
                    }
                }
                RewardCell::Dense(table) => {
                    for sp in 0..ns {
                        for y in 0..ny {
                            let _ = writeln!(
                                out,
                                "R: {} : {} : {} : {} : {}",
                                action_label[a],
                                states[s],
                                states[sp],
                                obs_label[y],
                                table[sp * ny + y]
                            );
                        }
                    }
                }
            }
        }
    }
    out
}
