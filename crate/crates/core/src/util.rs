/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Streaming log-sum-exp with a running maximum.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    scaled: CompensatedSum,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: CompensatedSum::default(),
        }
    }
}

impl LogSumExp {
    pub(crate) fn add(&mut self, x: f64) {
        if x > self.max {
            let rescale = (self.max - x).exp();
            let prev = self.scaled.value() * rescale;
            self.scaled = CompensatedSum::default();
            self.scaled.add(prev);
            self.max = x;
        }
        self.scaled.add((x - self.max).exp());
    }

    pub(crate) fn value(&self) -> f64 {
        self.max + self.scaled.value().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_beats_naive() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        let acc: CompensatedSum = xs.iter().copied().collect();
        assert_eq!(acc.value(), 2.0);
    }

    #[test]
    fn logsumexp_matches_direct() {
        let xs = [-1000.0, -999.0, -1001.5, -998.2];
        let mut l = LogSumExp::default();
        for &x in &xs {
            l.add(x);
        }
        let m = -998.2f64;
        let direct = m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        assert!((l.value() - direct).abs() < 1e-12);
    }
}
