use serde::{Deserialize, Serialize};

/// A (runtime, score) design point. Lower runtime and higher score are better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub runtime: f64,
    pub score: f64,
}

impl ParetoPoint {
    pub fn new(runtime: f64, score: f64) -> Self {
        ParetoPoint { runtime, score }
    }

    pub fn is_valid(&self) -> bool {
        self.runtime.is_finite() && self.runtime >= 0.0 && (0.0..=100.0).contains(&self.score)
    }

    /// Weak dominance with at least one strict improvement.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.runtime <= other.runtime
            && self.score >= other.score
            && (self.runtime < other.runtime || self.score > other.score)
    }
}

/// Non-dominated subset, sorted by increasing runtime (and so increasing
/// score). Duplicates collapse to one point.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.runtime
            .total_cmp(&b.runtime)
            .then(b.score.total_cmp(&a.score))
    });
    let mut front: Vec<ParetoPoint> = Vec::new();
    for p in sorted {
        if front.last().is_none_or(|best| p.score > best.score) {
            front.push(p);
        }
    }
    front
}

/// Area of the union of rectangles `[0, runtime] x [score, 100]`, measured
/// from the ideal point (zero runtime, score 100). Lower is closer to ideal.
pub fn hypervolume(points: &[ParetoPoint]) -> f64 {
    let mut area = 0.0;
    let mut prev_runtime = 0.0;
    // Walking the front from fast to slow, each slab between consecutive
    // runtimes is covered from the current point's score up to 100.
    for p in pareto_front(points) {
        area += (p.runtime - prev_runtime) * (100.0 - p.score);
        prev_runtime = p.runtime;
    }
    area
}
