//! Smooth compactly supported cutoffs.

use serde::{Deserialize, Serialize};

/// Smooth step: 1 for `u <= 0`, 0 for `u >= 1`, `C^∞` in between.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / (1.0 - u)).exp();
    let b = (-1.0 / u).exp();
    a / (a + b)
}

/// Equal to 1 below `inner`, 0 above `outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    pub fn new(inner: f64, outer: f64) -> Self {
        assert!(inner < outer, "cutoff needs inner < outer");
        Cutoff { inner, outer }
    }

    pub fn eval(&self, x: f64) -> f64 {
        smooth_step((x - self.inner) / (self.outer - self.inner))
    }

    pub fn complement(&self, x: f64) -> f64 {
        1.0 - self.eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_monotone_partition() {
        let c = Cutoff::new(1.0, 2.0);
        assert_eq!(c.eval(0.5), 1.0);
        assert_eq!(c.eval(2.5), 0.0);
        assert!((c.eval(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = c.eval(1.0 + i as f64 / 100.0);
            assert!(v <= prev);
            prev = v;
            assert!((v + c.complement(1.0 + i as f64 / 100.0) - 1.0).abs() < 1e-15);
        }
    }
}
