use serde::Serialize;

/// Running sums for the samples of `Y_ℓ` (and of `Q_ℓ`) on one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStatistics {
    pub level: usize,
    pub dof_count: usize,
    pub n: u64,
    pub sum_y: f64,
    pub sum_y2: f64,
    pub sum_q: f64,
    pub sum_q2: f64,
    /// Wall-clock seconds spent in model evaluations.
    pub cost_s: f64,
    /// Modelled work, see [`super::CostModel`].
    pub work: f64,
    /// Samples with `Y = +1` and `Y = −1` (indicator quantities only).
    pub x_plus: u64,
    pub x_minus: u64,
    /// `solves_reaching[j]`: samples whose solve ladder reached level `j`.
    pub solves_reaching: Vec<u64>,
    /// Samples whose solve failed and were left out of the sums.
    pub failed: u64,
}

impl LevelStatistics {
    pub fn new(level: usize, dof_count: usize) -> Self {
        Self {
            level,
            dof_count,
            n: 0,
            sum_y: 0.0,
            sum_y2: 0.0,
            sum_q: 0.0,
            sum_q2: 0.0,
            cost_s: 0.0,
            work: 0.0,
            x_plus: 0,
            x_minus: 0,
            solves_reaching: vec![0; level + 1],
            failed: 0,
        }
    }

    pub fn push(&mut self, y: f64, q: f64, cost_s: f64, work: f64, top_level: usize) {
        self.n += 1;
        self.sum_y += y;
        self.sum_y2 += y * y;
        self.sum_q += q;
        self.sum_q2 += q * q;
        self.cost_s += cost_s;
        self.work += work;
        if y == 1.0 {
            self.x_plus += 1;
        } else if y == -1.0 {
            self.x_minus += 1;
        }
        let top = top_level.min(self.level);
        self.solves_reaching
            .iter_mut()
            .take(top + 1)
            .for_each(|c| *c += 1);
    }

    fn mean(sum: f64, n: u64) -> f64 {
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn mean_y(&self) -> f64 {
        Self::mean(self.sum_y, self.n)
    }

    /// `(1/N) Σ Y² − Ȳ²`, clamped at zero.
    pub fn var_y(&self) -> f64 {
        (Self::mean(self.sum_y2, self.n) - self.mean_y().powi(2)).max(0.0)
    }

    pub fn mean_q(&self) -> f64 {
        Self::mean(self.sum_q, self.n)
    }

    pub fn var_q(&self) -> f64 {
        (Self::mean(self.sum_q2, self.n) - self.mean_q().powi(2)).max(0.0)
    }

    pub fn cost_per_sample(&self) -> f64 {
        Self::mean(self.cost_s, self.n)
    }

    pub fn work_per_sample(&self) -> f64 {
        Self::mean(self.work, self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn moments_recomputable_from_sums(ys in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
            let mut s = LevelStatistics::new(1, 10);
            for &y in &ys {
                s.push(y, y, 0.0, 1.0, 1);
            }
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((s.mean_y() - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            prop_assert!(s.var_y() >= 0.0);
            prop_assert!((s.var_y() - var).abs() <= 1e-7 * (1.0 + var));
        }
    }

    #[test]
    fn trinomial_counts_and_ladder() {
        let mut s = LevelStatistics::new(3, 10);
        s.push(1.0, 1.0, 0.0, 1.0, 2);
        s.push(-1.0, 0.0, 0.0, 1.0, 3);
        s.push(0.0, 0.0, 0.0, 1.0, 1);
        assert_eq!((s.x_plus, s.x_minus), (1, 1));
        assert_eq!(s.solves_reaching, vec![3, 3, 2, 1]);
    }
}
