//! Reconstructed value tables for enumerable games: per-agent utilities,
//! the Q_tot grid over all joint actions, and (when a recognizer is
//! present) the Q_r grid.

use powfactor_core::env::MatrixGameConfig;
use powfactor_core::learner::{enumerate_joint_actions, joint_to_index, Trainer};

#[derive(Debug, Clone)]
pub struct MatrixTables {
    pub n_actions: usize,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub greedy: Vec<usize>,
    /// Row-major over (a1, a2).
    pub qtot: Vec<f64>,
    pub qr: Option<Vec<f64>>,
    pub ar_mask: Option<Vec<bool>>,
    pub payoff: Vec<Vec<f64>>,
}

impl MatrixTables {
    pub fn from_trainer(trainer: &Trainer, cfg: &MatrixGameConfig) -> anyhow::Result<Self> {
        let probe = trainer.ar_probe().expect("matrix games carry a probe");
        let nets = &trainer.nets;
        let params = &nets.params;
        let n_actions = cfg.rows();

        let q = nets.utilities_at(params, &probe.obs, None)?;
        let greedy = trainer.greedy_at_probe()?.expect("matrix games are enumerable");

        let mut qtot = Vec::with_capacity(n_actions * n_actions);
        let mut qr = nets.recognizer.is_some().then(Vec::new);
        let best1 = q[0].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let best2 = q[1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for joint in enumerate_joint_actions(2, n_actions) {
            let chosen = [q[0][joint[0]], q[1][joint[1]]];
            qtot.push(nets.qtot_at(params, &chosen, &probe.state)?);
            if let Some(qr) = qr.as_mut() {
                let adv = [chosen[0] - best1, chosen[1] - best2];
                qr.push(
                    nets.qr_at(params, &adv, &probe.state, &joint)?
                        .expect("recognizer present"),
                );
            }
        }
        let ar_mask = nets.ar_mask(params, probe, trainer.cfg.weighting.slack)?;
        Ok(MatrixTables {
            n_actions,
            q1: q[0].clone(),
            q2: q[1].clone(),
            greedy,
            qtot,
            qr,
            ar_mask,
            payoff: cfg.payoff.clone(),
        })
    }

    pub fn qtot_at(&self, a1: usize, a2: usize) -> f64 {
        self.qtot[joint_to_index(&[a1, a2], self.n_actions)]
    }

    pub fn qr_at(&self, a1: usize, a2: usize) -> Option<f64> {
        self.qr
            .as_ref()
            .map(|qr| qr[joint_to_index(&[a1, a2], self.n_actions)])
    }

    /// Largest |Q_tot − payoff| over the grid.
    pub fn max_qtot_distortion(&self) -> f64 {
        let mut worst = 0.0f64;
        for a1 in 0..self.n_actions {
            for a2 in 0..self.n_actions {
                worst = worst.max((self.qtot_at(a1, a2) - self.payoff[a1][a2]).abs());
            }
        }
        worst
    }

    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let names: Vec<String> = (0..self.n_actions)
            .map(|i| {
                char::from_u32('A' as u32 + i as u32)
                    .map(|c| c.to_string())
                    .unwrap_or_else(|| i.to_string())
            })
            .collect();
        let _ = writeln!(s, "greedy joint action: ({}, {})", names[self.greedy[0]], names[self.greedy[1]]);
        let _ = write!(s, "Q_1:");
        for (i, v) in self.q1.iter().enumerate() {
            let _ = write!(s, "  {}={v:+.3}", names[i]);
        }
        let _ = write!(s, "\nQ_2:");
        for (i, v) in self.q2.iter().enumerate() {
            let _ = write!(s, "  {}={v:+.3}", names[i]);
        }
        let _ = writeln!(s);
        let grid = |s: &mut String, title: &str, values: &[f64]| {
            let _ = writeln!(s, "{title} (rows a1, cols a2):");
            let _ = write!(s, "      ");
            for name in &names {
                let _ = write!(s, "{name:>9}");
            }
            let _ = writeln!(s);
            for a1 in 0..self.n_actions {
                let _ = write!(s, "  {:>3} ", names[a1]);
                for a2 in 0..self.n_actions {
                    let _ = write!(s, " {:8.2}", values[a1 * self.n_actions + a2]);
                }
                let _ = writeln!(s);
            }
        };
        grid(&mut s, "Q_tot", &self.qtot);
        if let Some(qr) = &self.qr {
            grid(&mut s, "Q_r", qr);
        }
        if let Some(mask) = &self.ar_mask {
            let members: Vec<String> = mask
                .iter()
                .enumerate()
                .filter(|(_, m)| **m)
                .map(|(i, _)| {
                    format!(
                        "({}, {})",
                        names[i / self.n_actions],
                        names[i % self.n_actions]
                    )
                })
                .collect();
            let _ = writeln!(s, "A_r: {{{}}}", members.join(", "));
        }
        s
    }

    pub fn render_csv(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("table,a1,a2,value\n");
        for (i, v) in self.q1.iter().enumerate() {
            let _ = writeln!(s, "q1,{i},,{v:.6}");
        }
        for (i, v) in self.q2.iter().enumerate() {
            let _ = writeln!(s, "q2,,{i},{v:.6}");
        }
        for a1 in 0..self.n_actions {
            for a2 in 0..self.n_actions {
                let _ = writeln!(s, "qtot,{a1},{a2},{:.6}", self.qtot_at(a1, a2));
            }
        }
        if self.qr.is_some() {
            for a1 in 0..self.n_actions {
                for a2 in 0..self.n_actions {
                    let _ = writeln!(s, "qr,{a1},{a2},{:.6}", self.qr_at(a1, a2).unwrap());
                }
            }
        }
        if let Some(mask) = &self.ar_mask {
            for a1 in 0..self.n_actions {
                for a2 in 0..self.n_actions {
                    let m = mask[a1 * self.n_actions + a2];
                    let _ = writeln!(s, "ar,{a1},{a2},{}", if m { 1 } else { 0 });
                }
            }
        }
        s
    }
}
