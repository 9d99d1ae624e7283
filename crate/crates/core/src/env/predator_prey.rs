//! Predator-prey grid world with mis-capture punishment.
//!
//! Predators move on a rectangular grid and hunt prey that drift randomly.
//! A prey is captured when at least two predators in its four-neighborhood
//! choose the capture action in the same step; every capture action that is
//! not part of a successful capture costs the team the punishment `p`.
//! Each step: predators move (capturers hold still), captures resolve,
//! surviving prey drift one random legal cell. Setting `p < 0` makes the
//! reward structure non-monotonic: a lone capturer drags the whole team
//! down even when its own action was locally greedy-looking.
//!
//! Desk-scale defaults (7×7, 4 predators, 2 prey, radius-2 windows,
//! 60-step episodes) are intentionally smaller than the full benchmark
//! configurations used in published runs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{EnvStep, Environment};
use crate::{Error, Result};

pub const ACT_UP: usize = 0;
pub const ACT_DOWN: usize = 1;
pub const ACT_LEFT: usize = 2;
pub const ACT_RIGHT: usize = 3;
pub const ACT_STAY: usize = 4;
pub const ACT_CAPTURE: usize = 5;
pub const N_ACTIONS: usize = 6;

#[derive(Debug, Clone)]
pub struct PredatorPreyConfig {
    pub width: usize,
    pub height: usize,
    pub n_predators: usize,
    pub n_prey: usize,
    /// Shared punishment for each failed capture attempt; must be ≤ 0.
    pub miscapture_punishment: f64,
    pub capture_reward: f64,
    pub observation_radius: usize,
    pub episode_limit: usize,
}

impl Default for PredatorPreyConfig {
    fn default() -> Self {
        PredatorPreyConfig {
            width: 7,
            height: 7,
            n_predators: 4,
            n_prey: 2,
            miscapture_punishment: -2.0,
            capture_reward: 10.0,
            observation_radius: 2,
            episode_limit: 60,
        }
    }
}

impl PredatorPreyConfig {
    fn validate(&self) {
        assert!(self.miscapture_punishment <= 0.0, "punishment must be ≤ 0");
        assert!(self.capture_reward > 0.0, "capture reward must be > 0");
        assert!(self.episode_limit >= 1);
        assert!(
            self.n_predators + self.n_prey <= self.width * self.height,
            "grid too small for all entities"
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    x: i64,
    y: i64,
}

#[derive(Debug)]
pub struct PredatorPrey {
    cfg: PredatorPreyConfig,
    predators: Vec<Pos>,
    prey: Vec<Pos>,
    prey_alive: Vec<bool>,
    t: usize,
}

impl PredatorPrey {
    pub fn new(cfg: PredatorPreyConfig) -> Self {
        cfg.validate();
        PredatorPrey {
            predators: vec![Pos { x: 0, y: 0 }; cfg.n_predators],
            prey: vec![Pos { x: 0, y: 0 }; cfg.n_prey],
            prey_alive: vec![false; cfg.n_prey],
            t: 0,
            cfg,
        }
    }

    fn in_grid(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.cfg.width && (p.y as usize) < self.cfg.height
    }

    fn occupied(&self, p: Pos) -> bool {
        self.predators.iter().any(|&q| q == p)
            || self
                .prey
                .iter()
                .zip(&self.prey_alive)
                .any(|(&q, &alive)| alive && q == p)
    }

    fn movement(p: Pos, action: usize) -> Pos {
        match action {
            ACT_UP => Pos { x: p.x, y: p.y - 1 },
            ACT_DOWN => Pos { x: p.x, y: p.y + 1 },
            ACT_LEFT => Pos { x: p.x - 1, y: p.y },
            ACT_RIGHT => Pos { x: p.x + 1, y: p.y },
            _ => p,
        }
    }

    fn adjacent(a: Pos, b: Pos) -> bool {
        (a.x - b.x).abs() + (a.y - b.y).abs() == 1
    }

    /// Egocentric (2R+1)² window with three planes: other predators, live
    /// prey, out-of-grid cells.
    fn observe(&self, agent: usize) -> Vec<f64> {
        let r = self.cfg.observation_radius as i64;
        let side = (2 * r + 1) as usize;
        let mut obs = vec![0.0; 3 * side * side];
        let me = self.predators[agent];
        for dy in -r..=r {
            for dx in -r..=r {
                let cell = Pos { x: me.x + dx, y: me.y + dy };
                let idx = ((dy + r) as usize) * side + (dx + r) as usize;
                if !self.in_grid(cell) {
                    obs[2 * side * side + idx] = 1.0;
                    continue;
                }
                if self
                    .predators
                    .iter()
                    .enumerate()
                    .any(|(i, &q)| i != agent && q == cell)
                {
                    obs[idx] = 1.0;
                }
                if self
                    .prey
                    .iter()
                    .zip(&self.prey_alive)
                    .any(|(&q, &alive)| alive && q == cell)
                {
                    obs[side * side + idx] = 1.0;
                }
            }
        }
        obs
    }

    /// Two full-grid planes: predator occupancy and live-prey occupancy.
    fn global_state(&self) -> Vec<f64> {
        let (w, h) = (self.cfg.width, self.cfg.height);
        let mut s = vec![0.0; 2 * w * h];
        for &p in &self.predators {
            s[p.y as usize * w + p.x as usize] = 1.0;
        }
        for (p, alive) in self.prey.iter().zip(&self.prey_alive) {
            if *alive {
                s[w * h + p.y as usize * w + p.x as usize] = 1.0;
            }
        }
        s
    }

    /// Movement off the grid is masked out; stay and capture are always
    /// available.
    fn avail_for(&self, agent: usize) -> Vec<bool> {
        let me = self.predators[agent];
        let mut avail = vec![true; N_ACTIONS];
        for a in [ACT_UP, ACT_DOWN, ACT_LEFT, ACT_RIGHT] {
            avail[a] = self.in_grid(Self::movement(me, a));
        }
        avail
    }

    fn snapshot(&self, reward: f64, terminal: bool) -> EnvStep {
        EnvStep {
            state: self.global_state(),
            obs: (0..self.cfg.n_predators).map(|i| self.observe(i)).collect(),
            reward,
            terminal,
            avail: (0..self.cfg.n_predators).map(|i| self.avail_for(i)).collect(),
        }
    }

    #[cfg(test)]
    fn place(&mut self, predators: &[(i64, i64)], prey: &[(i64, i64)]) {
        for (i, &(x, y)) in predators.iter().enumerate() {
            self.predators[i] = Pos { x, y };
        }
        for (i, &(x, y)) in prey.iter().enumerate() {
            self.prey[i] = Pos { x, y };
            self.prey_alive[i] = true;
        }
        self.t = 0;
    }
}

impl Environment for PredatorPrey {
    fn n_agents(&self) -> usize {
        self.cfg.n_predators
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn state_dim(&self) -> usize {
        2 * self.cfg.width * self.cfg.height
    }

    fn obs_dim(&self) -> usize {
        let side = 2 * self.cfg.observation_radius + 1;
        3 * side * side
    }

    fn episode_limit(&self) -> usize {
        self.cfg.episode_limit
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> EnvStep {
        // place all entities on distinct cells, uniformly at random
        let n_cells = self.cfg.width * self.cfg.height;
        let need = self.cfg.n_predators + self.cfg.n_prey;
        let mut cells: Vec<usize> = (0..n_cells).collect();
        for i in 0..need {
            let j = rng.gen_range(i..n_cells);
            cells.swap(i, j);
        }
        for (i, p) in self.predators.iter_mut().enumerate() {
            *p = Pos {
                x: (cells[i] % self.cfg.width) as i64,
                y: (cells[i] / self.cfg.width) as i64,
            };
        }
        for (i, p) in self.prey.iter_mut().enumerate() {
            let c = cells[self.cfg.n_predators + i];
            *p = Pos {
                x: (c % self.cfg.width) as i64,
                y: (c / self.cfg.width) as i64,
            };
        }
        self.prey_alive = vec![true; self.cfg.n_prey];
        self.t = 0;
        self.snapshot(0.0, false)
    }

    fn step(&mut self, joint_action: &[usize], rng: &mut ChaCha8Rng) -> Result<EnvStep> {
        assert_eq!(joint_action.len(), self.cfg.n_predators);
        for (agent, &a) in joint_action.iter().enumerate() {
            if a >= N_ACTIONS {
                return Err(Error::ActionOutOfRange {
                    agent,
                    action: a,
                    n_actions: N_ACTIONS,
                });
            }
        }

        // predators move in index order; a move is canceled if the target
        // cell is occupied, so the lowest index wins contested cells
        for (i, &a) in joint_action.iter().enumerate() {
            let target = Self::movement(self.predators[i], a);
            if target != self.predators[i] && self.in_grid(target) && !self.occupied(target) {
                self.predators[i] = target;
            }
        }

        // capture resolution against the positions the capture decisions
        // were aimed at; surviving prey drift afterwards
        let mut reward = 0.0;
        let capturing: Vec<usize> = joint_action
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == ACT_CAPTURE)
            .map(|(i, _)| i)
            .collect();
        let mut successful = vec![false; self.cfg.n_predators];
        for i in 0..self.cfg.n_prey {
            if !self.prey_alive[i] {
                continue;
            }
            let hunters: Vec<usize> = capturing
                .iter()
                .copied()
                .filter(|&p| Self::adjacent(self.predators[p], self.prey[i]))
                .collect();
            if hunters.len() >= 2 {
                self.prey_alive[i] = false;
                reward += self.cfg.capture_reward;
                for p in hunters {
                    successful[p] = true;
                }
            }
        }
        for &p in &capturing {
            if !successful[p] {
                reward += self.cfg.miscapture_punishment;
            }
        }

        // prey drift: uniformly random legal move (stay is always legal)
        for i in 0..self.cfg.n_prey {
            if !self.prey_alive[i] {
                continue;
            }
            let mut legal = vec![ACT_STAY];
            for a in [ACT_UP, ACT_DOWN, ACT_LEFT, ACT_RIGHT] {
                let t = Self::movement(self.prey[i], a);
                if self.in_grid(t) && !self.occupied(t) {
                    legal.push(a);
                }
            }
            let a = legal[rng.gen_range(0..legal.len())];
            self.prey[i] = Self::movement(self.prey[i], a);
        }

        self.t += 1;
        let terminal = self.prey_alive.iter().all(|a| !a) || self.t >= self.cfg.episode_limit;
        Ok(self.snapshot(reward, terminal))
    }
}
