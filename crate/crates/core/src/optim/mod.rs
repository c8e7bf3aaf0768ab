//! Channel-width search: gradient descent on the smooth hardware loss with
//! projection onto the channel grid, a brute-force oracle, operator scoring
//! and Pareto metrics.

mod ops;
mod pareto;

pub use ops::{rank_operators, score_operators, CellOp, EdgeRanking, OpScore};
pub use pareto::{hypervolume, pareto_front, ParetoPoint};

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arch::{ArchError, LayerTemplate, NetworkSpec};
use crate::hw_model::{hard_layer_cost, HardwareConfig, NetworkCost};
use crate::smooth::{
    HardwareLossParams, SmoothError, SmoothNetwork, SmoothParams, SmoothShape, VarId,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("network has no tunable cell widths")]
    NoWidths,
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("non-finite loss or gradient at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("{combinations} grid combinations exceed the cap of {cap}")]
    CapExceeded { combinations: u128, cap: u64 },
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// Channel grid `{min_c, min_c + step, ..., <= max_c}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChannelSearchSpace {
    pub min_c: u64,
    pub max_c: u64,
    pub step: u64,
}

impl Default for ChannelSearchSpace {
    fn default() -> Self {
        ChannelSearchSpace {
            min_c: 64,
            max_c: 280,
            step: 8,
        }
    }
}

impl ChannelSearchSpace {
    pub fn new(min_c: u64, max_c: u64, step: u64) -> Result<Self, OptimError> {
        let s = ChannelSearchSpace { min_c, max_c, step };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if self.min_c == 0 {
            return Err(OptimError::Space("min_c must be positive".into()));
        }
        if self.min_c > self.max_c {
            return Err(OptimError::Space(format!(
                "min_c {} > max_c {}",
                self.min_c, self.max_c
            )));
        }
        if self.step == 0 {
            return Err(OptimError::Space("step must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<u64> {
        (self.min_c..=self.max_c)
            .step_by(self.step as usize)
            .collect()
    }

    /// Largest grid value; `max_c` itself when it lies on the grid.
    pub fn top(&self) -> u64 {
        self.min_c + (self.max_c - self.min_c) / self.step * self.step
    }

    pub fn contains(&self, c: u64) -> bool {
        c >= self.min_c && c <= self.max_c && (c - self.min_c).is_multiple_of(self.step)
    }

    /// The grid points bracketing `x` (equal when `x` is on the grid).
    pub fn neighbors(&self, x: f64) -> (u64, u64) {
        let x = x.clamp(self.min_c as f64, self.top() as f64);
        let steps = (x - self.min_c as f64) / self.step as f64;
        let lo = self.min_c + steps.floor() as u64 * self.step;
        let hi = self.min_c + steps.ceil() as u64 * self.step;
        (lo, hi.min(self.top()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimConfig {
    /// Step length in channels.
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once a step changes the loss by less than this.
    pub tolerance: f64,
    pub hl: HardwareLossParams,
    /// `None` starts every width at the grid midpoint; `Some` draws the
    /// starting widths uniformly from `[min_c, max_c]`.
    pub seed: Option<u64>,
    pub shape: SmoothShape,
    /// Sharpening stages; stage `s` of `S` uses steepness `B / 2^(S-1-s)`.
    pub stages: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 16.0,
            max_iterations: 400,
            tolerance: 1e-9,
            hl: HardwareLossParams {
                lambda: 1.0,
                beta: 1.0,
            },
            seed: None,
            shape: SmoothShape::default(),
            stages: 4,
        }
    }
}

/// Learning-rate halvings allowed before the descent gives up.
pub const MAX_HALVINGS: u32 = 10;

impl OptimConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(OptimError::Config("learning rate must be positive".into()));
        }
        if self.stages == 0 {
            return Err(OptimError::Config("at least one stage is required".into()));
        }
        if self.max_iterations == 0 {
            return Err(OptimError::Config(
                "max iterations must be at least 1".into(),
            ));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(OptimError::Config("tolerance must be non-negative".into()));
        }
        self.hl.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub iteration: usize,
    pub stage: usize,
    pub loss: f64,
    pub widths: Vec<f64>,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimResult {
    pub initial_widths: Vec<f64>,
    /// Hard cost at the initial widths rounded to integers.
    pub initial_cost: NetworkCost,
    pub initial_loss: f64,
    pub continuous: Vec<f64>,
    pub channels: Vec<u64>,
    pub trajectory: Vec<TrajectoryStep>,
    pub converged: bool,
    pub final_cost: NetworkCost,
    pub final_loss: f64,
}

/// Hard-model loss of a lowered network for many width assignments.
#[derive(Debug, Clone)]
pub struct HardLoss<'a> {
    templates: Vec<LayerTemplate>,
    hw: &'a HardwareConfig,
    hl: HardwareLossParams,
}

/// Hard loss with the runtime used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub cycles: u64,
}

impl<'a> HardLoss<'a> {
    pub fn new(
        spec: &NetworkSpec,
        hw: &'a HardwareConfig,
        hl: HardwareLossParams,
    ) -> Result<Self, OptimError> {
        Ok(HardLoss {
            templates: crate::arch::lower(spec)?,
            hw,
            hl,
        })
    }

    pub fn cost(&self, widths: &[u64]) -> NetworkCost {
        let layers = self
            .templates
            .iter()
            .map(|t| hard_layer_cost(&t.resolve(widths), self.hw))
            .collect();
        NetworkCost::from_layers(layers, self.hw)
    }

    pub fn eval(&self, widths: &[u64]) -> Evaluation {
        let mut cycles = 0u64;
        let mut macs = 0u64;
        for t in &self.templates {
            let l = t.resolve(widths);
            cycles += crate::hw_model::hard_cycles(&l, self.hw);
            macs += crate::hw_model::macs(&l);
        }
        let util = if cycles == 0 {
            1.0
        } else {
            macs as f64 / (self.hw.peak_macs_per_cycle() as f64 * cycles as f64)
        };
        Evaluation {
            loss: self.hl.eval(self.hw.cycles_to_seconds(cycles), util),
            cycles,
        }
    }
}

/// Total order used by every discrete search: loss, then runtime, then the
/// lexicographically smaller width vector.
fn better(a: (&Evaluation, &[u64]), b: (&Evaluation, &[u64])) -> Ordering {
    a.0.loss
        .total_cmp(&b.0.loss)
        .then(a.0.cycles.cmp(&b.0.cycles))
        .then(a.1.cmp(b.1))
}

/// Hard-model loss `lambda * runtime_s - beta * utilization` of `spec` at its
/// declared widths.
pub fn hard_loss(
    spec: &NetworkSpec,
    hw: &HardwareConfig,
    hl: &HardwareLossParams,
) -> Result<f64, OptimError> {
    Ok(HardLoss::new(spec, hw, *hl)?.eval(spec.widths()).loss)
}

/// Projects continuous widths onto the grid: every combination of each
/// variable's two bracketing grid points is scored by the hard loss, falling
/// back to coordinate-wise choice beyond 12 variables.
pub fn project(widths: &[f64], space: &ChannelSearchSpace, eval: &HardLoss<'_>) -> Vec<u64> {
    let brackets: Vec<(u64, u64)> = widths.iter().map(|&x| space.neighbors(x)).collect();
    let n = brackets.len();
    if n <= 12 {
        let mut best: Option<(Evaluation, Vec<u64>)> = None;
        for mask in 0u32..(1 << n) {
            let cand: Vec<u64> = brackets
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| if mask >> i & 1 == 1 { hi } else { lo })
                .collect();
            if (0..n).any(|i| mask >> i & 1 == 1 && brackets[i].0 == brackets[i].1) {
                continue;
            }
            let e = eval.eval(&cand);
            if best
                .as_ref()
                .is_none_or(|(be, bc)| better((&e, &cand), (be, bc)) == Ordering::Less)
            {
                best = Some((e, cand));
            }
        }
        best.expect("at least one combination").1
    } else {
        let mut cur: Vec<u64> = brackets.iter().map(|&(lo, _)| lo).collect();
        for i in 0..n {
            let (lo, hi) = brackets[i];
            cur[i] = lo;
            let el = eval.eval(&cur);
            let mut alt = cur.clone();
            alt[i] = hi;
            let eh = eval.eval(&alt);
            if better((&eh, &alt), (&el, &cur)) == Ordering::Less {
                cur = alt;
            }
        }
        cur
    }
}

fn direction(g: f64) -> f64 {
    if g == 0.0 {
        0.0
    } else {
        g.signum()
    }
}

fn initial_widths(n: usize, space: &ChannelSearchSpace, seed: Option<u64>) -> Vec<f64> {
    let (lo, hi) = (space.min_c as f64, space.top() as f64);
    match seed {
        None => vec![(lo + hi) / 2.0; n],
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..n)
                .map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                .collect()
        }
    }
}

/// Gradient descent on the smooth hardware loss over one continuous width
/// per cell, clamped to the search range, followed by grid projection.
///
/// Each step moves every width by the learning rate (in channels) against
/// the sign of its partial derivative. A step that raises the loss is
/// retried at half the size, up to [`MAX_HALVINGS`] times, after which the
/// stage ends. The relaxation is sharpened over `cfg.stages` stages, ending
/// at the configured step steepness.
pub fn optimize_channels(
    spec: &NetworkSpec,
    hw: &HardwareConfig,
    space: &ChannelSearchSpace,
    cfg: &OptimConfig,
) -> Result<OptimResult, OptimError> {
    space.validate()?;
    cfg.validate()?;
    let n = spec.num_widths();
    if n == 0 {
        return Err(OptimError::NoWidths);
    }
    let net = SmoothNetwork::new(spec)?;
    let x_max = net.covering_x_max(hw, space.top());
    let hard = HardLoss::new(spec, hw, cfg.hl)?;
    let (lo, hi) = (space.min_c as f64, space.top() as f64);

    let initial = initial_widths(n, space, cfg.seed);
    let rounded: Vec<u64> = initial.iter().map(|x| x.round() as u64).collect();
    let initial_eval = hard.eval(&rounded);

    let mut x = initial.clone();
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut iteration = 0;

    for stage in 0..cfg.stages {
        let mut shape = cfg.shape;
        shape.b /= 2f64.powi((cfg.stages - 1 - stage) as i32);
        let params = SmoothParams::new(shape, x_max);
        let evaluate = |x: &[f64], iteration: usize| -> Result<(f64, Vec<f64>), OptimError> {
            let vars = SmoothNetwork::variables(x);
            let loss = net.loss(&vars, hw, &params, &cfg.hl)?;
            if !loss.is_finite() {
                return Err(OptimError::NonFinite { iteration });
            }
            Ok((
                loss.value(),
                (0..n).map(|i| loss.partial(VarId(i))).collect(),
            ))
        };
        let (mut loss, mut grad) = evaluate(&x, iteration)?;
        converged = false;
        while iteration < cfg.max_iterations {
            trajectory.push(TrajectoryStep {
                iteration,
                stage,
                loss,
                widths: x.clone(),
                gradient: grad.clone(),
                gradient_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            });
            iteration += 1;
            let mut lr = cfg.learning_rate;
            let mut next = None;
            for _ in 0..=MAX_HALVINGS {
                let cand: Vec<f64> = x
                    .iter()
                    .zip(&grad)
                    .map(|(xi, gi)| (xi - lr * direction(*gi)).clamp(lo, hi))
                    .collect();
                let (cl, cg) = evaluate(&cand, iteration)?;
                if cl <= loss {
                    next = Some((cand, cl, cg));
                    break;
                }
                lr /= 2.0;
            }
            let Some((cand, cl, cg)) = next else {
                converged = true;
                break;
            };
            let delta = loss - cl;
            x = cand;
            loss = cl;
            grad = cg;
            if delta < cfg.tolerance {
                converged = true;
                break;
            }
        }
    }

    let channels = project(&x, space, &hard);
    let final_eval = hard.eval(&channels);
    Ok(OptimResult {
        initial_widths: initial,
        initial_cost: hard.cost(&rounded),
        initial_loss: initial_eval.loss,
        continuous: x,
        final_cost: hard.cost(&channels),
        final_loss: final_eval.loss,
        channels,
        trajectory,
        converged,
    })
}

/// Default bound on grid combinations for [`exhaustive_search`].
pub const DEFAULT_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustiveResult {
    pub channels: Vec<u64>,
    pub loss: f64,
    pub evaluations: u64,
    pub cost: NetworkCost,
}

/// Hard-model loss at every grid assignment; the minimum by loss, runtime and
/// then lexicographic width order.
pub fn exhaustive_search(
    spec: &NetworkSpec,
    hw: &HardwareConfig,
    space: &ChannelSearchSpace,
    hl: &HardwareLossParams,
    cap: u64,
) -> Result<ExhaustiveResult, OptimError> {
    space.validate()?;
    hl.validate()?;
    let n = spec.num_widths();
    if n == 0 {
        return Err(OptimError::NoWidths);
    }
    let grid = space.grid();
    let g = grid.len() as u128;
    let combinations = (0..n)
        .try_fold(1u128, |acc, _| acc.checked_mul(g))
        .unwrap_or(u128::MAX);
    if combinations > cap as u128 {
        return Err(OptimError::CapExceeded { combinations, cap });
    }
    let hard = HardLoss::new(spec, hw, *hl)?;
    let decode = |mut idx: u64| -> Vec<u64> {
        let mut w = vec![0; n];
        for slot in w.iter_mut().rev() {
            *slot = grid[(idx % grid.len() as u64) as usize];
            idx /= grid.len() as u64;
        }
        w
    };
    let (eval, channels) = (0..combinations as u64)
        .into_par_iter()
        .map(|i| {
            let w = decode(i);
            (hard.eval(&w), w)
        })
        .min_by(|a, b| better((&a.0, &a.1), (&b.0, &b.1)))
        .expect("grid is non-empty");
    Ok(ExhaustiveResult {
        loss: eval.loss,
        evaluations: combinations as u64,
        cost: hard.cost(&channels),
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::parse_network;

    pub(crate) fn cell_net(stack: usize, k: u64) -> NetworkSpec {
        let widths = vec!["160"; stack].join(", ");
        parse_network(&format!(
            r#"
            input = {{ h = 32, w = 32, c = 64, b = 1 }}
            stack = {stack}
            widths = [{widths}]
            maxpool_every = 1
            [cell]
            nodes = [0, 1, 2, 3]
            edges = [
              {{ src = 0, dst = 2, kind = "conv", k = {k} }},
              {{ src = 1, dst = 2, kind = "conv", k = {k} }},
              {{ src = 2, dst = 3, kind = "conv", k = {k} }},
              {{ src = 0, dst = 3, kind = "identity" }},
            ]
            "#
        ))
        .unwrap()
    }

    #[test]
    fn grid_and_neighbors() {
        let s = ChannelSearchSpace::default();
        let grid = s.grid();
        assert_eq!(grid.len(), 28);
        assert_eq!((grid[0], grid[27]), (64, 280));
        assert_eq!(s.neighbors(130.0), (128, 136));
        assert_eq!(s.neighbors(128.0), (128, 128));
        assert_eq!(s.neighbors(10.0), (64, 64));
        assert_eq!(s.neighbors(1e9), (280, 280));
        assert!(ChannelSearchSpace::new(100, 64, 8).is_err());
        assert!(ChannelSearchSpace::new(64, 280, 0).is_err());
        assert_eq!(ChannelSearchSpace::new(64, 70, 8).unwrap().top(), 64);
    }

    #[test]
    fn exhaustive_single_cell_counts_grid() {
        let hw = HardwareConfig::default();
        let hl = HardwareLossParams::new(1.0, 1.0).unwrap();
        let r = exhaustive_search(
            &cell_net(1, 3),
            &hw,
            &ChannelSearchSpace::default(),
            &hl,
            DEFAULT_CAP,
        )
        .unwrap();
        assert_eq!(r.evaluations, 28);
        assert!(r.channels[0] == 128 || r.channels[0] == 256);
    }

    #[test]
    fn exhaustive_degenerate_and_cap() {
        let hw = HardwareConfig::default();
        let hl = HardwareLossParams::new(1.0, 1.0).unwrap();
        let one = ChannelSearchSpace::new(96, 96, 8).unwrap();
        assert_eq!(
            exhaustive_search(&cell_net(2, 3), &hw, &one, &hl, 1)
                .unwrap()
                .channels,
            vec![96, 96]
        );
        assert!(matches!(
            exhaustive_search(
                &cell_net(3, 3),
                &hw,
                &ChannelSearchSpace::default(),
                &hl,
                1000
            ),
            Err(OptimError::CapExceeded {
                combinations: 21952,
                ..
            })
        ));
    }

    #[test]
    fn utilization_only_lands_on_array_multiple() {
        let hw = HardwareConfig::default();
        let cfg = OptimConfig {
            hl: HardwareLossParams::new(0.0, 1.0).unwrap(),
            ..OptimConfig::default()
        };
        let r =
            optimize_channels(&cell_net(1, 1), &hw, &ChannelSearchSpace::default(), &cfg).unwrap();
        assert!(
            r.channels[0] == 128 || r.channels[0] == 256,
            "{:?}",
            r.channels
        );
    }

    #[test]
    fn runtime_only_collapses_to_min() {
        let hw = HardwareConfig::default();
        let cfg = OptimConfig {
            hl: HardwareLossParams::new(1e6, 0.0).unwrap(),
            ..OptimConfig::default()
        };
        let r =
            optimize_channels(&cell_net(2, 3), &hw, &ChannelSearchSpace::default(), &cfg).unwrap();
        assert_eq!(r.channels, vec![64, 64]);
    }

    #[test]
    fn trajectory_is_non_increasing_and_projection_on_grid() {
        let hw = HardwareConfig::default();
        let space = ChannelSearchSpace::default();
        for seed in 0..10 {
            let cfg = OptimConfig {
                seed: Some(seed),
                ..OptimConfig::default()
            };
            let r = optimize_channels(&cell_net(3, 3), &hw, &space, &cfg).unwrap();
            assert!(r
                .trajectory
                .windows(2)
                .all(|w| w[1].stage != w[0].stage || w[1].loss <= w[0].loss));
            assert!(r.channels.iter().all(|&c| space.contains(c)));
        }
    }

    #[test]
    fn flat_network_has_nothing_to_tune() {
        let spec =
            parse_network(r#"{"input":{"h":8,"w":8,"c":16,"b":1},"layers":[{"kind":"relu"}]}"#)
                .unwrap();
        let r = optimize_channels(
            &spec,
            &HardwareConfig::default(),
            &ChannelSearchSpace::default(),
            &OptimConfig::default(),
        );
        assert_eq!(r.unwrap_err(), OptimError::NoWidths);
    }
}
