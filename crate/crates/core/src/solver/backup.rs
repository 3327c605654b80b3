//! Backward recursions over `(s, y, z)`.
//!
//! With `λ > 0` every quantity is kept as `λ·value` in log space: the
//! centralized Q slice is `λ·r(s,a) + log Σ P(s',y'|s,a)·exp(L_{t+1}(s',y',z))`
//! and the value is `L_t = log Σ π_t(a,z|y,z_-)·exp(Q_t)`. With `λ = 0` the
//! same recursions run on plain expectations.

use crate::error::NumericError;
use crate::layout::Layout;
use crate::model::DecPomdpModel;
use crate::risk::{LogSumExp, RiskParameter};

/// Value tensor over `(s, y, z)` for one step.
///
/// Holds `λ·V_t` when `λ > 0` and `V_t` when the parameter is neutral.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedValueTensor {
    /// Step index, `1..=T+1`.
    pub t: usize,
    pub risk: RiskParameter,
    pub values: Vec<f64>,
}

impl TiltedValueTensor {
    pub fn terminal(t: usize, risk: RiskParameter, cells: usize) -> Self {
        Self {
            t,
            risk,
            values: vec![0.0; cells],
        }
    }

    pub fn is_plain(&self) -> bool {
        self.risk.is_neutral()
    }

    /// `V_t` at a cell, undoing the `λ` scaling.
    pub fn value(&self, cell: usize) -> f64 {
        if self.is_plain() {
            self.values[cell]
        } else {
            self.values[cell] / self.risk.lambda()
        }
    }
}

/// Transient centralized Q slice over `(s, y, z_-, a, z)`, scaled by `λ`
/// when risk seeking.
#[derive(Debug, Clone)]
pub struct QSlice {
    pub t: usize,
    pub risk: RiskParameter,
    pub values: Vec<f64>,
}

/// Cached kernels for repeated backups on one model.
pub(crate) struct BackupKernels {
    log_transition: Vec<f64>,
    log_observation: Vec<f64>,
}

impl BackupKernels {
    pub fn new(model: &DecPomdpModel) -> Self {
        Self {
            log_transition: model.transition().iter().map(|p| p.ln()).collect(),
            log_observation: model.observation().iter().map(|p| p.ln()).collect(),
        }
    }
}

/// `G(s, a, z)`: the expected (or log-expected tilted) next value after
/// joint action `a` with next joint agent state `z`.
pub(crate) fn continuation(
    model: &DecPomdpModel,
    kernels: &BackupKernels,
    layout: &Layout,
    next: &[f64],
    risk: RiskParameter,
) -> Vec<f64> {
    let (ns, ny, na, nz) = (layout.states, layout.observations, layout.actions, layout.memories);
    // H(a, s', z) over observations first, then G over next states.
    let mut h = vec![0.0; na * ns * nz];
    let mut g = vec![0.0; ns * na * nz];
    if risk.is_neutral() {
        for a in 0..na {
            for sp in 0..ns {
                let orow = model.observation_row(a, sp);
                let out = &mut h[(a * ns + sp) * nz..(a * ns + sp + 1) * nz];
                for (y, &p) in orow.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let base = (sp * ny + y) * nz;
                    for z in 0..nz {
                        out[z] += p * next[base + z];
                    }
                }
            }
        }
        for s in 0..ns {
            for a in 0..na {
                let trow = model.transition_row(s, a);
                let out = &mut g[(s * na + a) * nz..(s * na + a + 1) * nz];
                for (sp, &p) in trow.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let hrow = &h[(a * ns + sp) * nz..(a * ns + sp + 1) * nz];
                    for z in 0..nz {
                        out[z] += p * hrow[z];
                    }
                }
            }
        }
        return g;
    }
    let mut acc = vec![LogSumExp::new(); nz];
    for a in 0..na {
        for sp in 0..ns {
            let row = (a * ns + sp) * ny;
            acc.iter_mut().for_each(|x| *x = LogSumExp::new());
            for y in 0..ny {
                let lp = kernels.log_observation[row + y];
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let base = (sp * ny + y) * nz;
                for z in 0..nz {
                    acc[z].push(lp + next[base + z]);
                }
            }
            for z in 0..nz {
                h[(a * ns + sp) * nz + z] = acc[z].value();
            }
        }
    }
    for s in 0..ns {
        for a in 0..na {
            let row = (s * na + a) * ns;
            acc.iter_mut().for_each(|x| *x = LogSumExp::new());
            for sp in 0..ns {
                let lp = kernels.log_transition[row + sp];
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let hrow = &h[(a * ns + sp) * nz..(a * ns + sp + 1) * nz];
                for z in 0..nz {
                    acc[z].push(lp + hrow[z]);
                }
            }
            for z in 0..nz {
                g[(s * na + a) * nz + z] = acc[z].value();
            }
        }
    }
    g
}

/// Fills `q` with the centralized Q slice for step `t` given `next`
/// (the value tensor at `t + 1`).
pub(crate) fn fill_q_slice(
    model: &DecPomdpModel,
    kernels: &BackupKernels,
    layout: &Layout,
    next: &[f64],
    risk: RiskParameter,
    q: &mut [f64],
) {
    let g = continuation(model, kernels, layout, next, risk);
    let scale = if risk.is_neutral() { 1.0 } else { risk.lambda() };
    let (ns, na, nz) = (layout.states, layout.actions, layout.memories);
    let rows = layout.observations * nz;
    let width = na * nz;
    let mut block = vec![0.0; width];
    for s in 0..ns {
        for a in 0..na {
            let r = scale * model.reward(s, a);
            for z in 0..nz {
                block[a * nz + z] = r + g[(s * na + a) * nz + z];
            }
        }
        // Q does not depend on (y, z_-); every row of this state repeats the block.
        for row in 0..rows {
            let start = (s * rows + row) * width;
            q[start..start + width].copy_from_slice(&block);
        }
    }
}

/// Folds the joint decision rule into the Q slice: `L_t(s, y, z_-)`.
pub(crate) fn fold_policy(
    layout: &Layout,
    q: &[f64],
    rule: &[f64],
    risk: RiskParameter,
    t: usize,
    out: &mut [f64],
) -> Result<(), NumericError> {
    let rows = layout.observations * layout.memories;
    let width = layout.columns();
    let neutral = risk.is_neutral();
    for s in 0..layout.states {
        for row in 0..rows {
            let cell = s * rows + row;
            let qrow = &q[cell * width..(cell + 1) * width];
            let prow = &rule[row * width..(row + 1) * width];
            let v = if neutral {
                prow.iter().zip(qrow).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * q).sum()
            } else {
                let mut acc = LogSumExp::new();
                for (p, qv) in prow.iter().zip(qrow) {
                    if *p > 0.0 {
                        acc.push(p.ln() + qv);
                    }
                }
                acc.value()
            };
            if !v.is_finite() {
                return Err(NumericError { t, cell, value: v });
            }
            out[cell] = v;
        }
    }
    Ok(())
}
