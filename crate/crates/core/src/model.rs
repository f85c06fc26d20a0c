//! Model parameters `(m, n)` and the combinatorial constants attached to them.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

/// Dimensional regime of the pair `(m, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    LowDim,
    HighDim,
}

/// A validated pair `(m, n)` with `n` odd and `1 <= n < 4m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: i64,
    pub n: i64,
    pub m_n: i64,
    pub k_c: i64,
    pub regime: Regime,
}

/// A half-integer index stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HalfIndex {
    pub twice: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    pub k: i64,
    pub members: Vec<HalfIndex>,
}

pub fn make_params(m: i64, n: i64) -> Result<ModelParams> {
    if m < 1 {
        return Err(Error::NonPositiveOrder(m));
    }
    if n < 1 || n >= 4 * m {
        return Err(Error::DimensionOutOfRange { m, n });
    }
    if n % 2 == 0 {
        return Err(Error::EvenDimension(n));
    }
    let (m_n, regime) = if n < 2 * m {
        (m, Regime::LowDim)
    } else {
        (2 * m - (n - 1) / 2, Regime::HighDim)
    };
    Ok(ModelParams {
        m,
        n,
        m_n,
        k_c: (m - (n - 1) / 2).max(0),
        regime,
    })
}

impl HalfIndex {
    pub const fn int(j: i64) -> Self {
        HalfIndex { twice: 2 * j }
    }

    pub const fn from_twice(twice: i64) -> Self {
        HalfIndex { twice }
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.twice % 2 == 0
    }

    /// `max{0, floor(j + 1/2)}`.
    pub fn delta(self) -> i64 {
        (self.twice + 1).div_euclid(2).max(0)
    }

    /// Integer part `floor(j)`.
    pub fn floor(self) -> i64 {
        self.twice.div_euclid(2)
    }
}

impl fmt::Display for HalfIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

impl ModelParams {
    pub fn max_kind(&self) -> i64 {
        self.m_n + 1
    }

    pub fn is_low_dim(&self) -> bool {
        self.regime == Regime::LowDim
    }

    /// `m - n/2`.
    pub fn j_mid(&self) -> HalfIndex {
        HalfIndex::from_twice(2 * self.m - self.n)
    }

    /// `2m - n/2`.
    pub fn j_top(&self) -> HalfIndex {
        HalfIndex::from_twice(4 * self.m - self.n)
    }

    /// `2m - n`, the power of the zero-energy kernel `b_0 |x|^{2m-n}`.
    pub fn zero_energy_power(&self) -> i64 {
        2 * self.m - self.n
    }

    /// Largest integer member of `J_{m_n+1}`: `2m - (n+1)/2`.
    pub fn max_integer_index(&self) -> i64 {
        2 * self.m - (self.n + 1) / 2
    }

    fn check_kind(&self, k: i64) -> Result<()> {
        if k < 0 || k > self.max_kind() {
            return Err(Error::KindOutOfRange {
                k,
                max: self.max_kind(),
            });
        }
        Ok(())
    }

    /// Spatial decay exponent `n(m-1)/(2m-1)` of the free envelope.
    pub fn spatial_exponent(&self) -> Rational {
        Rational::new(self.n * (self.m - 1), 2 * self.m - 1)
    }
}

pub fn index_set(params: &ModelParams, k: i64) -> Result<IndexSet> {
    params.check_kind(k)?;
    let (m, n) = (params.m, params.n);
    let mut members = Vec::new();
    if params.is_low_dim() {
        let top_low = m - (n + 1) / 2;
        members.extend((0..=top_low).map(HalfIndex::int));
        members.push(params.j_mid());
        if k >= 1 && k <= params.m_n {
            let kc = params.k_c;
            members.extend((kc..kc + k).map(HalfIndex::int));
        } else if k == params.m_n + 1 {
            members.extend((params.k_c..=params.max_integer_index()).map(HalfIndex::int));
            members.push(params.j_top());
        }
    } else {
        members.push(params.j_mid());
        if k >= 1 && k <= params.m_n {
            members.extend((0..k).map(HalfIndex::int));
        } else if k == params.m_n + 1 {
            members.extend((0..=params.max_integer_index()).map(HalfIndex::int));
            members.push(params.j_top());
        }
    }
    members.sort();
    members.dedup();
    Ok(IndexSet { k, members })
}

impl IndexSet {
    pub fn max(&self) -> HalfIndex {
        *self.members.last().expect("index sets are nonempty")
    }

    pub fn contains(&self, j: HalfIndex) -> bool {
        self.members.contains(&j)
    }

    /// Largest member strictly below `j`, if any.
    pub fn predecessor(&self, j: HalfIndex) -> Option<HalfIndex> {
        self.members.iter().copied().filter(|&i| i < j).max()
    }
}

/// Integer members of `J_k` below `m - n/2`.
pub fn lower_indices(params: &ModelParams, set: &IndexSet) -> Vec<i64> {
    let mid = params.j_mid();
    set.members
        .iter()
        .filter(|j| j.is_integer() && **j < mid)
        .map(|j| j.twice / 2)
        .collect()
}

/// Integer members of `J_k` strictly between `m - n/2` and `2m - n/2`.
pub fn upper_indices(params: &ModelParams, set: &IndexSet) -> Vec<i64> {
    let (mid, top) = (params.j_mid(), params.j_top());
    set.members
        .iter()
        .filter(|j| j.is_integer() && **j > mid && **j < top)
        .map(|j| j.twice / 2)
        .collect()
}

/// Long-time decay exponent `h(m, n, k)`.
pub fn decay_exponent(params: &ModelParams, k: i64) -> Result<Rational> {
    params.check_kind(k)?;
    let two_m = 2 * params.m;
    Ok(if k <= params.k_c {
        Rational::new(params.n, two_m)
    } else if k <= params.m_n {
        Rational::new(2 * params.m_n + 1 - 2 * k, two_m)
    } else {
        Rational::new(1, two_m)
    })
}

pub fn rational_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `(1+|t|)^{-h} (1+|t|^{-n/2m}) (1+|t|^{-1/2m} r)^{-n(m-1)/(2m-1)}`.
pub fn envelope(params: &ModelParams, k: i64, t: f64, r: f64) -> Result<f64> {
    if t == 0.0 {
        return Err(Error::ZeroTime);
    }
    let h = rational_to_f64(decay_exponent(params, k)?);
    let two_m = 2.0 * params.m as f64;
    let at = t.abs();
    let s = at.powf(-1.0 / two_m) * r;
    Ok((1.0 + at).powf(-h)
        * (1.0 + at.powf(-(params.n as f64) / two_m))
        * (1.0 + s).powf(-rational_to_f64(params.spatial_exponent())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(m: i64, n: i64, k: i64) -> Vec<i64> {
        index_set(&make_params(m, n).unwrap(), k)
            .unwrap()
            .members
            .iter()
            .map(|j| j.twice)
            .collect()
    }

    #[test]
    fn derived_constants() {
        let p = make_params(2, 1).unwrap();
        assert_eq!((p.m_n, p.k_c), (2, 2));
        let p = make_params(1, 3).unwrap();
        assert_eq!((p.m_n, p.k_c), (1, 0));
        assert_eq!(make_params(1, 5), Err(Error::DimensionOutOfRange { m: 1, n: 5 }));
        assert_eq!(make_params(2, 2), Err(Error::EvenDimension(2)));
        assert_eq!(make_params(0, 1), Err(Error::NonPositiveOrder(0)));
    }

    #[test]
    fn index_sets_low_dim() {
        assert_eq!(set(2, 1, 0), vec![0, 2, 3]);
        assert_eq!(set(2, 1, 1), vec![0, 2, 3, 4]);
        assert_eq!(set(2, 1, 2), vec![0, 2, 3, 4, 6]);
        assert_eq!(set(2, 1, 3), vec![0, 2, 3, 4, 6, 7]);
        assert_eq!(set(1, 1, 0), vec![0, 1]);
        assert_eq!(set(1, 1, 2), vec![0, 1, 2, 3]);
    }

    #[test]
    fn index_sets_high_dim() {
        assert_eq!(set(1, 3, 0), vec![-1]);
        assert_eq!(set(1, 3, 1), vec![-1, 0]);
        assert_eq!(set(1, 3, 2), vec![-1, 0, 1]);
        // (m, n) = (2, 5): m_n = 2, J_3 = {-1/2, 0, 1, 3/2}
        assert_eq!(set(2, 5, 3), vec![-1, 0, 2, 3]);
    }

    #[test]
    fn half_index_delta() {
        assert_eq!(HalfIndex::from_twice(3).delta(), 2);
        assert_eq!(HalfIndex::from_twice(-1).delta(), 0);
        assert_eq!(HalfIndex::int(2).delta(), 2);
        assert_eq!(HalfIndex::from_twice(7).to_string(), "7/2");
    }

    #[test]
    fn decay_exponents() {
        let p = make_params(2, 3).unwrap();
        assert_eq!(decay_exponent(&p, 0).unwrap(), Rational::new(3, 4));
        assert_eq!(decay_exponent(&p, 2).unwrap(), Rational::new(1, 4));
        assert_eq!(decay_exponent(&p, 3).unwrap(), Rational::new(1, 4));
        let p = make_params(2, 1).unwrap();
        for k in 0..=3 {
            assert_eq!(decay_exponent(&p, k).unwrap(), Rational::new(1, 4));
        }
        assert!(decay_exponent(&p, 4).is_err());
    }

    #[test]
    fn envelope_values() {
        let p = make_params(1, 1).unwrap();
        let h = rational_to_f64(decay_exponent(&p, 0).unwrap());
        let e = envelope(&p, 0, 1.0, 0.0).unwrap();
        assert!((e - 2f64.powf(-h) * 2.0).abs() < 1e-15);
        let p = make_params(2, 1).unwrap();
        let r1 = envelope(&p, 0, 1.0, 1e6).unwrap();
        let r2 = envelope(&p, 0, 1.0, 8e6).unwrap();
        assert!((r1 / r2 - 2.0).abs() < 1e-5);
        assert_eq!(envelope(&p, 0, 0.0, 1.0), Err(Error::ZeroTime));
    }
}
