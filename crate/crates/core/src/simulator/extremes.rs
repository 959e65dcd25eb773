use serde::Serialize;

/// Extremes and decomposition times of one killed path, read off its grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathExtremes {
    pub kill_time: f64,
    /// `T` exceeded the simulation cap; such paths are excluded from
    /// estimates.
    pub truncated: bool,
    pub sup: f64,
    pub inf: f64,
    /// Last grid time at the running supremum.
    pub h_sup: f64,
    /// Last grid time at the running infimum.
    pub h_inf: f64,
    /// Last exit from the infimum before the first passage above the level,
    /// when a level was supplied and crossed before `T`.
    pub rho: Option<f64>,
    /// First grid time strictly above the level.
    pub tau_up: Option<f64>,
    /// Running infimum at `tau_up`.
    pub inf_at_tau: Option<f64>,
    /// Maximum drawdown `M⁻`.
    pub max_loss: f64,
    /// Maximum drawup `M⁺`.
    pub max_gain: f64,
    /// Supremum of the post-`H_I` process.
    pub post_inf_sup: f64,
    /// Maximum loss of the post-`H_S` process, `S_T − inf_{[H_S, T]} X`.
    pub post_sup_max_loss: f64,
    /// Infimum of the pre-`H_S` process.
    pub pre_sup_inf: f64,
    #[serde(skip)]
    pub(crate) index: Indices,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Indices {
    pub h_sup: usize,
    pub h_inf: usize,
    pub last: usize,
    /// (rho, tau)
    pub crossing: Option<(usize, usize)>,
}

impl PathExtremes {
    pub const INVARIANTS: [&'static str; 7] = [
        "inf <= 0 <= sup",
        "0 <= h_sup <= T",
        "0 <= h_inf <= T",
        "0 <= max_loss <= sup - inf",
        "0 <= max_gain <= sup - inf",
        "h_inf < h_sup => max_gain = sup - inf",
        "h_sup < h_inf => max_loss = sup - inf",
    ];

    /// Whether each of [`Self::INVARIANTS`] holds; equalities are exact.
    pub fn invariant_flags(&self) -> [bool; 7] {
        let range = self.sup - self.inf;
        [
            self.inf <= 0.0 && 0.0 <= self.sup,
            0.0 <= self.h_sup && self.h_sup <= self.kill_time,
            0.0 <= self.h_inf && self.h_inf <= self.kill_time,
            0.0 <= self.max_loss && self.max_loss <= range,
            0.0 <= self.max_gain && self.max_gain <= range,
            !(self.h_inf < self.h_sup) || self.max_gain == range,
            !(self.h_sup < self.h_inf) || self.max_loss == range,
        ]
    }

    /// Names the first violated invariant, if any.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        match self.invariant_flags().iter().position(|ok| !ok) {
            Some(i) => Err(Self::INVARIANTS[i]),
            None => Ok(()),
        }
    }
}

/// Single left-to-right pass over a grid path.
#[derive(Debug, Clone)]
pub(crate) struct ExtremesAccumulator {
    level: Option<f64>,
    n: usize,
    sup: f64,
    inf: f64,
    h_sup: f64,
    h_inf: f64,
    i_sup: usize,
    i_inf: usize,
    max_loss: f64,
    max_gain: f64,
    post_inf_sup: f64,
    post_sup_min: f64,
    pre_sup_inf: f64,
    // (tau, rho, inf, i_rho, i_tau)
    crossing: Option<(f64, f64, f64, usize, usize)>,
}

impl ExtremesAccumulator {
    pub fn new(level: Option<f64>) -> Self {
        Self {
            level,
            n: 0,
            sup: f64::NEG_INFINITY,
            inf: f64::INFINITY,
            h_sup: 0.0,
            h_inf: 0.0,
            i_sup: 0,
            i_inf: 0,
            max_loss: 0.0,
            max_gain: 0.0,
            post_inf_sup: f64::NEG_INFINITY,
            post_sup_min: f64::INFINITY,
            pre_sup_inf: 0.0,
            crossing: None,
        }
    }

    #[inline]
    pub fn push(&mut self, t: f64, x: f64) {
        let i = self.n;
        self.n += 1;
        // ties go to the later time
        if x <= self.inf {
            self.inf = x;
            self.h_inf = t;
            self.i_inf = i;
            self.post_inf_sup = x;
        } else if x > self.post_inf_sup {
            self.post_inf_sup = x;
        }
        if x >= self.sup {
            self.sup = x;
            self.h_sup = t;
            self.i_sup = i;
            self.post_sup_min = x;
            self.pre_sup_inf = self.inf;
        } else if x < self.post_sup_min {
            self.post_sup_min = x;
        }
        self.max_loss = self.max_loss.max(self.sup - x);
        self.max_gain = self.max_gain.max(x - self.inf);
        if let Some(level) = self.level {
            if self.crossing.is_none() && x > level {
                self.crossing = Some((t, self.h_inf, self.inf, self.i_inf, i));
            }
        }
    }

    pub fn finish(&self, kill_time: f64, truncated: bool) -> PathExtremes {
        debug_assert!(self.n > 0);
        let crossing = self.crossing;
        PathExtremes {
            kill_time,
            truncated,
            sup: self.sup,
            inf: self.inf,
            h_sup: self.h_sup,
            h_inf: self.h_inf,
            rho: crossing.map(|c| c.1),
            tau_up: crossing.map(|c| c.0),
            inf_at_tau: crossing.map(|c| c.2),
            max_loss: self.max_loss,
            max_gain: self.max_gain,
            post_inf_sup: self.post_inf_sup,
            post_sup_max_loss: self.sup - self.post_sup_min,
            pre_sup_inf: self.pre_sup_inf,
            index: Indices {
                h_sup: self.i_sup,
                h_inf: self.i_inf,
                last: self.n - 1,
                crossing: crossing.map(|c| (c.3, c.4)),
            },
        }
    }
}

/// Accumulators for the same path observed on coarser grids: stride `s`
/// sees every `s`-th point plus the final one, which is the path an Euler
/// scheme with step `s·dt` would produce from the same randomness.
pub(crate) struct StridedExtremes {
    first: ExtremesAccumulator,
    // (stride, countdown to the next observed point, accumulator)
    coarse: Vec<(usize, usize, ExtremesAccumulator)>,
    last: (f64, f64),
}

impl StridedExtremes {
    /// `strides[0]` must be 1.
    pub fn new(level: Option<f64>, strides: &[usize]) -> Self {
        debug_assert_eq!(strides.first(), Some(&1));
        Self {
            first: ExtremesAccumulator::new(level),
            coarse: strides[1..]
                .iter()
                .map(|&s| (s, 0, ExtremesAccumulator::new(level)))
                .collect(),
            last: (0.0, 0.0),
        }
    }

    #[inline]
    pub fn push(&mut self, t: f64, x: f64) {
        self.first.push(t, x);
        if self.coarse.is_empty() {
            return;
        }
        self.last = (t, x);
        for (s, countdown, acc) in &mut self.coarse {
            if *countdown == 0 {
                acc.push(t, x);
                *countdown = *s;
            }
            *countdown -= 1;
        }
    }

    pub fn finish(mut self, kill_time: f64, truncated: bool) -> Vec<PathExtremes> {
        let (t, x) = self.last;
        let mut out = vec![self.first.finish(kill_time, truncated)];
        for (s, countdown, acc) in &mut self.coarse {
            // the final point was skipped on this grid
            if *countdown != *s - 1 {
                acc.push(t, x);
            }
            out.push(acc.finish(kill_time, truncated));
        }
        out
    }
}
