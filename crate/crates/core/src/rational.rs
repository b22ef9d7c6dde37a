//! Exact rational arithmetic for the Dirichlet-product closed forms, for
//! rational `α` and small `n`. Detailed balance and consistency come out as
//! exact equalities here.

use num::bigint::BigInt;
use num::{One, Signed, ToPrimitive, Zero};

pub use num::rational::BigRational;

use crate::coloring::{enumerate, Coloring};
use crate::discrete::transition_counts;
use crate::error::{Error, Result};
use crate::kernel::state_count;

/// Largest `n` accepted by the rational path.
pub const MAX_RATIONAL_N: usize = 8;

/// `p/q` as a big rational.
pub fn ratio(p: i64, q: i64) -> Result<BigRational> {
    if q == 0 {
        return Err(Error::InvalidParameter("zero denominator".into()));
    }
    Ok(BigRational::new(BigInt::from(p), BigInt::from(q)))
}

/// Parses `"p/q"` or an integer.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let parse = |s: &str| s.trim().parse::<i64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    match text.split_once('/') {
        Some((p, q)) => ratio(parse(p)?, parse(q)?),
        None => ratio(parse(text)?, 1),
    }
}

/// Exact `α` for an `f64` that is a small-denominator rational (e.g. 1, 2, 0.5, 2.5).
pub fn rational_from_f64(alpha: f64) -> Option<BigRational> {
    for q in 1..=1000i64 {
        let p = alpha * q as f64;
        if (p - p.round()).abs() < 1e-12 && p.abs() < 1e15 {
            return ratio(p.round() as i64, q).ok();
        }
    }
    None
}

/// Nearest `f64`.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn check_alpha(alpha: &BigRational) -> Result<()> {
    if !alpha.is_positive() {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

pub fn rising_factorial(a: &BigRational, m: usize) -> BigRational {
    let mut acc = BigRational::one();
    let mut term = a.clone();
    for _ in 0..m {
        acc *= &term;
        term += BigRational::one();
    }
    acc
}

/// Exact Dirichlet-product transition probability.
pub fn dirichlet_transition(x: &Coloring, y: &Coloring, alpha: &BigRational) -> Result<BigRational> {
    check_alpha(alpha)?;
    if x.k() != y.k() || x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), got: y.len() });
    }
    let k = x.k();
    let shape = alpha / BigRational::from_integer(BigInt::from(k));
    let counts = transition_counts(x, y);
    let mut p = BigRational::one();
    for i in 0..k {
        let row = &counts[i * k..(i + 1) * k];
        for &c in row {
            p *= rising_factorial(&shape, c);
        }
        p /= rising_factorial(alpha, row.iter().sum());
    }
    Ok(p)
}

/// Exact `λ(x) = Π_i α^{↑n_i(x)} / (kα)^{↑n}`.
pub fn dirichlet_lambda(x: &Coloring, alpha: &BigRational) -> Result<BigRational> {
    check_alpha(alpha)?;
    let k_alpha = alpha * BigRational::from_integer(BigInt::from(x.k()));
    let mut p = BigRational::one();
    for c in x.counts() {
        p *= rising_factorial(alpha, c);
    }
    Ok(p / rising_factorial(&k_alpha, x.len()))
}

/// The exact kernel as a dense row-major vector over [`Coloring::index`] order.
pub fn dirichlet_kernel(n: usize, k: usize, alpha: &BigRational) -> Result<Vec<BigRational>> {
    if n > MAX_RATIONAL_N {
        return Err(Error::InvalidParameter(format!("rational mode supports n ≤ {MAX_RATIONAL_N}")));
    }
    state_count(k, n)?;
    let states: Vec<Coloring> = enumerate(k, n).collect();
    let mut out = Vec::with_capacity(states.len() * states.len());
    for x in &states {
        for y in &states {
            out.push(dirichlet_transition(x, y, alpha)?);
        }
    }
    Ok(out)
}

/// Exact outcome of a balance scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactScan {
    pub pairs_checked: usize,
    /// Largest `|lhs − rhs|`; zero when the identity holds exactly.
    pub max_deviation: BigRational,
    pub rows_sum_to_one: bool,
}

impl ExactScan {
    pub fn holds(&self) -> bool {
        self.max_deviation.is_zero() && self.rows_sum_to_one
    }
}

/// `λ(x)P(x,x') = λ(x')P(x',x)` over all pairs, and `λP = λ`, in exact arithmetic.
pub fn detailed_balance(n: usize, k: usize, alpha: &BigRational) -> Result<ExactScan> {
    let kernel = dirichlet_kernel(n, k, alpha)?;
    let states: Vec<Coloring> = enumerate(k, n).collect();
    let s = states.len();
    let lambda = states.iter().map(|x| dirichlet_lambda(x, alpha)).collect::<Result<Vec<_>>>()?;
    let mut max_dev = BigRational::zero();
    let mut rows_ok = true;
    for a in 0..s {
        let row_sum: BigRational = kernel[a * s..(a + 1) * s].iter().sum();
        rows_ok &= row_sum.is_one();
        for b in 0..s {
            let dev = (&lambda[a] * &kernel[a * s + b] - &lambda[b] * &kernel[b * s + a]).abs();
            if dev > max_dev {
                max_dev = dev;
            }
        }
        // stationarity column a
        let flow: BigRational = (0..s).map(|b| &lambda[b] * &kernel[b * s + a]).sum();
        let dev = (flow - &lambda[a]).abs();
        if dev > max_dev {
            max_dev = dev;
        }
    }
    Ok(ExactScan { pairs_checked: s * s, max_deviation: max_dev, rows_sum_to_one: rows_ok })
}

/// Marginalization `P_m(x,x') = Σ_{x̂ : x̂^[m] = x'} P_n(x*, x̂)` over every
/// `x`, extension `x*` and `x'`, in exact arithmetic.
pub fn consistency(m: usize, n: usize, k: usize, alpha: &BigRational) -> Result<ExactScan> {
    if m > n {
        return Err(Error::InvalidParameter("need m ≤ n".into()));
    }
    let small = dirichlet_kernel(m, k, alpha)?;
    let big = dirichlet_kernel(n, k, alpha)?;
    let sm = state_count(k, m)?;
    let sn = state_count(k, n)?;
    let block = sn / sm;
    let mut max_dev = BigRational::zero();
    let mut pairs = 0;
    for ext in 0..sn {
        let x = ext / block;
        for xp in 0..sm {
            let projected: BigRational = (0..block).map(|t| big[ext * sn + xp * block + t].clone()).sum();
            let dev = (projected - &small[x * sm + xp]).abs();
            if dev > max_dev {
                max_dev = dev;
            }
            pairs += 1;
        }
    }
    Ok(ExactScan { pairs_checked: pairs, max_deviation: max_dev, rows_sum_to_one: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let two = ratio(2, 1).unwrap();
        let c = |s: &str| Coloring::parse(2, s).unwrap();
        assert_eq!(dirichlet_transition(&c("11"), &c("11"), &two).unwrap(), ratio(1, 3).unwrap());
        assert_eq!(dirichlet_transition(&c("11"), &c("12"), &two).unwrap(), ratio(1, 6).unwrap());
        assert_eq!(dirichlet_transition(&c("11"), &c("21"), &two).unwrap(), ratio(1, 6).unwrap());
        assert_eq!(dirichlet_transition(&c("11"), &c("22"), &two).unwrap(), ratio(1, 3).unwrap());
        assert_eq!(dirichlet_transition(&c("12"), &c("11"), &two).unwrap(), ratio(1, 4).unwrap());
        assert_eq!(dirichlet_lambda(&c("11"), &two).unwrap(), ratio(3, 10).unwrap());
        assert_eq!(dirichlet_lambda(&c("12"), &two).unwrap(), ratio(1, 5).unwrap());
    }

    #[test]
    fn balance_and_consistency_are_exact() {
        for alpha in ["1", "2", "5", "1/2", "7/3"] {
            let a = parse_rational(alpha).unwrap();
            for (k, n) in [(2, 1), (2, 3), (3, 2)] {
                assert!(detailed_balance(n, k, &a).unwrap().holds(), "alpha {alpha} k {k} n {n}");
            }
            assert!(consistency(1, 2, 2, &a).unwrap().holds());
            assert!(consistency(2, 3, 2, &a).unwrap().holds());
        }
    }

    #[test]
    fn parsing() {
        assert_eq!(parse_rational("7/3").unwrap(), ratio(7, 3).unwrap());
        assert_eq!(rational_from_f64(2.5).unwrap(), ratio(5, 2).unwrap());
        assert!(parse_rational("x").is_err());
        assert!(dirichlet_kernel(9, 2, &ratio(1, 1).unwrap()).is_err());
    }
}
