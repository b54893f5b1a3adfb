use crate::error::{Error, Result};

/// Which one-sided limit to take at a discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub t_start: f64,
    pub t_end: f64,
    pub base_step: f64,
    pub breakpoints: Vec<f64>,
}

impl Grid {
    /// Breakpoints outside the open interval are dropped, the rest sorted
    /// and deduplicated.
    pub fn new(t_start: f64, t_end: f64, base_step: f64, breakpoints: Vec<f64>) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(Error::invalid(format!(
                "grid interval [{t_start}, {t_end}] is empty"
            )));
        }
        if !(base_step > 0.0 && base_step.is_finite()) {
            return Err(Error::invalid(format!("base step {base_step} must be positive")));
        }
        let tol = 1e-9 * base_step;
        let mut bps: Vec<f64> = breakpoints
            .into_iter()
            .filter(|b| b.is_finite() && *b > t_start + tol && *b < t_end - tol)
            .collect();
        bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bps.dedup_by(|a, b| (*a - *b).abs() <= tol);
        Ok(Grid {
            t_start,
            t_end,
            base_step,
            breakpoints: bps,
        })
    }

    pub fn uniform(t_start: f64, t_end: f64, base_step: f64) -> Result<Self> {
        Self::new(t_start, t_end, base_step, Vec::new())
    }

    pub fn with_breakpoints(&self, extra: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut all = self.breakpoints.clone();
        all.extend(extra);
        Self::new(self.t_start, self.t_end, self.base_step, all)
    }

    /// Same step and breakpoints restricted to `[t_start, t_end]`.
    pub fn restrict(&self, t_start: f64, t_end: f64) -> Result<Self> {
        Self::new(t_start, t_end, self.base_step, self.breakpoints.clone())
    }

    /// Sample times with sides. Interior nodes are tagged `Right`, the final
    /// node `Left`; every breakpoint appears twice, left limit first.
    pub fn samples(&self) -> Vec<(f64, Side)> {
        let h = self.base_step;
        let span = self.t_end - self.t_start;
        let n = ((span / h) - 1e-9).ceil().max(1.0) as usize;
        let merge_tol = 1e-6 * h;
        let mut out = Vec::with_capacity(n + 2 * self.breakpoints.len() + 1);
        let mut bp = self.breakpoints.iter().peekable();
        for i in 0..=n {
            let t = if i == n {
                self.t_end
            } else {
                self.t_start + i as f64 * h
            };
            let mut node_is_bp = false;
            while let Some(&&b) = bp.peek() {
                if b < t - merge_tol {
                    out.push((b, Side::Left));
                    out.push((b, Side::Right));
                    bp.next();
                } else if (b - t).abs() <= merge_tol {
                    out.push((b, Side::Left));
                    out.push((b, Side::Right));
                    bp.next();
                    node_is_bp = true;
                } else {
                    break;
                }
            }
            if node_is_bp {
                continue;
            }
            let side = if i == n { Side::Left } else { Side::Right };
            out.push((t, side));
        }
        out
    }

    /// Smooth pieces `[a, b]` delimited by the breakpoints.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        let mut edges = vec![self.t_start];
        edges.extend(self.breakpoints.iter().copied());
        edges.push(self.t_end);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Piece containing `t` for the given side, as `(a, b)`.
    pub fn piece_of(&self, t: f64, side: Side) -> (f64, f64) {
        let idx = match side {
            Side::Right => self.breakpoints.partition_point(|b| *b <= t),
            Side::Left => self.breakpoints.partition_point(|b| *b < t),
        };
        let a = if idx == 0 {
            self.t_start
        } else {
            self.breakpoints[idx - 1]
        };
        let b = if idx == self.breakpoints.len() {
            self.t_end
        } else {
            self.breakpoints[idx]
        };
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_double_breakpoints() {
        let g = Grid::new(0.0, 1.0, 0.25, vec![0.5, 0.6, 2.0]).unwrap();
        let s = g.samples();
        let times: Vec<f64> = s.iter().map(|x| x.0).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.5, 0.6, 0.6, 0.75, 1.0]);
        assert_eq!(s[2].1, Side::Left);
        assert_eq!(s[3].1, Side::Right);
        assert_eq!(s.last().unwrap().1, Side::Left);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Grid::new(1.0, 1.0, 0.1, vec![]).is_err());
        assert!(Grid::new(0.0, 1.0, 0.0, vec![]).is_err());
    }

    #[test]
    fn piece_lookup() {
        let g = Grid::new(0.0, 3.0, 0.1, vec![1.0, 2.0]).unwrap();
        assert_eq!(g.piece_of(1.0, Side::Left), (0.0, 1.0));
        assert_eq!(g.piece_of(1.0, Side::Right), (1.0, 2.0));
        assert_eq!(g.piece_of(2.5, Side::Right), (2.0, 3.0));
    }
}
