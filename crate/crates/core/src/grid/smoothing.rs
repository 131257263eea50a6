use std::collections::VecDeque;

use crate::grid::params::Smoothing;
use crate::types::Position2D;

/// Exponential moving average; with no previous value the current one is returned.
pub fn smooth_ema(previous: Option<Position2D>, current: Position2D, alpha: f64) -> Position2D {
    match previous {
        None => current,
        Some(p) => Position2D::new(
            alpha * current.x + (1.0 - alpha) * p.x,
            alpha * current.y + (1.0 - alpha) * p.y,
        ),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-node position smoother (EMA, or sliding median followed by EMA).
#[derive(Debug, Clone)]
pub struct Smoother {
    kind: Smoothing,
    alpha: f64,
    window: usize,
    recent: VecDeque<Position2D>,
    last: Option<Position2D>,
}

impl Smoother {
    pub fn new(kind: Smoothing, alpha: f64, window: usize) -> Self {
        Self {
            kind,
            alpha,
            window: window.max(1),
            recent: VecDeque::new(),
            last: None,
        }
    }

    pub fn push(&mut self, p: Position2D) -> Position2D {
        let out = match self.kind {
            Smoothing::None => p,
            Smoothing::Ema => smooth_ema(self.last, p, self.alpha),
            Smoothing::MedianEma => {
                if self.recent.len() == self.window {
                    self.recent.pop_front();
                }
                self.recent.push_back(p);
                let mut xs: Vec<f64> = self.recent.iter().map(|q| q.x).collect();
                let mut ys: Vec<f64> = self.recent.iter().map(|q| q.y).collect();
                let m = Position2D::new(median(&mut xs), median(&mut ys));
                smooth_ema(self.last, m, self.alpha)
            }
        };
        self.last = Some(out);
        out
    }
}
