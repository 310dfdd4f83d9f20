//! Serial independence of subcrossing counts and of excursion indicators.

use statrs::distribution::{ChiSquared, ContinuousCDF, Gamma};

use crate::critical_values::CvTable;
use crate::error::{Error, Result};
use crate::outcome::{TestId, TestOutcome};
use crate::qv_test::normal_sf;

pub const AUTOCORR_MIN_N: usize = 5;
pub const AUTOCORR_TABLE_MAX_N: usize = 100;
pub const JOINT_MIN_N: usize = 10;
pub const RUNS_EXACT_MAX_N: usize = 50;
pub const OBRIEN76_TABLE_MAX: usize = 10;
pub const LARSEN_MIN_N: usize = 3;
pub const LARSEN_TABLE_MAX_N: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitOrigin {
    IndicatorOfTwos,
    Excursions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitSequence {
    pub bits: Vec<u8>,
    pub origin: BitOrigin,
}

impl BitSequence {
    pub fn new(bits: Vec<u8>, origin: BitOrigin) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        BitSequence { bits, origin }
    }

    pub fn counts(&self) -> (usize, usize) {
        let n1 = self.bits.iter().filter(|&&b| b == 1).count();
        (self.bits.len() - n1, n1)
    }

    fn id(&self, twos: TestId, ud: TestId) -> TestId {
        match self.origin {
            BitOrigin::IndicatorOfTwos => twos,
            BitOrigin::Excursions => ud,
        }
    }
}

pub fn indicator_of_twos(z: &[u32]) -> BitSequence {
    BitSequence::new(z.iter().map(|&v| u8::from(v == 2)).collect(), BitOrigin::IndicatorOfTwos)
}

/// Lag-one autocorrelation with the null mean 4 in the numerator.
pub fn autocorr_statistic(z: &[u32]) -> Result<f64> {
    let n = z.len() as f64;
    let mean = z.iter().map(|&v| v as f64).sum::<f64>() / n;
    let den: f64 = z.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    if den == 0.0 {
        return Err(Error::Undefined("constant sample has zero variance".into()));
    }
    let num: f64 = z.windows(2).map(|w| (w[1] as f64 - 4.0) * (w[0] as f64 - 4.0)).sum();
    Ok(num / den)
}

pub fn lag1_autocorr_test(z: &[u32], cv: Option<&CvTable>) -> Result<TestOutcome> {
    let n = z.len();
    if n < AUTOCORR_MIN_N {
        return Ok(TestOutcome::skip(TestId::Autocorr, n, format!("n = {n} < {AUTOCORR_MIN_N}")));
    }
    let i1 = autocorr_statistic(z)?;
    if n <= AUTOCORR_TABLE_MAX_N {
        let table = cv.ok_or_else(|| Error::MissingCriticalValue { test: "autocorr".into(), n, q: 0.025 })?;
        let lo = table.lookup(n, 0.025)?.value;
        let hi = table.lookup(n, 0.975)?.value;
        Ok(TestOutcome::from_flag(TestId::Autocorr, i1, i1 <= lo || i1 >= hi, n))
    } else {
        let t = (n as f64).sqrt() * i1;
        Ok(TestOutcome::from_p(TestId::Autocorr, i1, 2.0 * normal_sf(t.abs()), n))
    }
}

pub fn joint_statistic(z: &[u32]) -> f64 {
    let m = z.len() / 2;
    let p = [0.5, 0.25, 0.25];
    let mut o = [[0.0f64; 3]; 3];
    for pair in z.chunks_exact(2) {
        let i = ((pair[0] / 2) as usize).min(3) - 1;
        let j = ((pair[1] / 2) as usize).min(3) - 1;
        o[i][j] += 1.0;
    }
    let mut stat = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let e = m as f64 * p[i] * p[j];
            stat += (o[i][j] - e).powi(2) / e;
        }
    }
    stat
}

pub fn joint_dist_test(z: &[u32]) -> Result<TestOutcome> {
    joint_dist_test_as(z, TestId::Joint)
}

pub(crate) fn joint_dist_test_as(z: &[u32], id: TestId) -> Result<TestOutcome> {
    let n = z.len();
    if n < JOINT_MIN_N {
        return Ok(TestOutcome::skip(id, n, format!("n = {n} < {JOINT_MIN_N}")));
    }
    let stat = joint_statistic(z);
    let p = ChiSquared::new(8.0).expect("df 8").sf(stat);
    Ok(TestOutcome::from_p(id, stat, p, n))
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn run_count(bits: &[u8]) -> usize {
    if bits.is_empty() {
        0
    } else {
        1 + bits.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Exact null pmf of the number of runs given the symbol counts, indexed by run count.
pub fn runs_pmf(n0: usize, n1: usize) -> Vec<f64> {
    let n = n0 + n1;
    let total = binom(n, n0);
    let mut pmf = vec![0.0; n + 1];
    for (r, slot) in pmf.iter_mut().enumerate().skip(2) {
        let k = r / 2;
        let ways = if r % 2 == 0 {
            2.0 * binom(n0 - 1, k - 1) * binom(n1 - 1, k - 1)
        } else {
            binom(n0 - 1, k) * binom(n1 - 1, k - 1) + binom(n0 - 1, k - 1) * binom(n1 - 1, k)
        };
        *slot = ways / total;
    }
    pmf
}

pub fn wald_wolfowitz_runs(b: &BitSequence) -> Result<TestOutcome> {
    let id = b.id(TestId::Runs, TestId::RunsUd);
    let (n0, n1) = b.counts();
    let n = n0 + n1;
    if n0 == 0 || n1 == 0 {
        return Ok(TestOutcome::skip(id, n, "single symbol"));
    }
    let r = run_count(&b.bits);
    let (lower, upper) = if n <= RUNS_EXACT_MAX_N {
        let pmf = runs_pmf(n0, n1);
        (pmf[..=r].iter().sum::<f64>(), pmf[r..].iter().sum::<f64>())
    } else {
        let (a, c, nf) = (n0 as f64, n1 as f64, n as f64);
        let mu = 2.0 * a * c / nf + 1.0;
        let var = 2.0 * a * c * (2.0 * a * c - nf) / (nf * nf * (nf - 1.0));
        let sd = var.sqrt();
        let rf = r as f64;
        (1.0 - normal_sf((rf + 0.5 - mu) / sd), normal_sf((rf - 0.5 - mu) / sd))
    };
    let p = (2.0 * lower.min(upper)).min(1.0);
    Ok(TestOutcome::from_p(id, r as f64, p, n))
}

/// Null mean and variance of the biased variance of `k` nonnegative parts summing
/// to `n`, all weak compositions equally likely.
pub fn composition_s2_moments(n: usize, k: usize) -> (f64, f64) {
    let (nf, kf) = (n as f64, k as f64);
    let falling = |r: usize| (0..r).fold(1.0, |acc, i| acc * (nf - i as f64));
    let rising = |r: usize| (0..r).fold(1.0, |acc, i| acc * (kf + i as f64));
    let fact = |r: usize| (1..=r).fold(1.0, |acc, i| acc * i as f64);
    let f = |r: usize| falling(r) * fact(r) / rising(r);
    let g = |r: usize, s: usize| falling(r + s) * fact(r) * fact(s) / rising(r + s);

    let ew2 = f(2) + f(1);
    let ew4 = f(4) + 6.0 * f(3) + 7.0 * f(2) + f(1);
    let ew2w2 = g(2, 2) + 2.0 * g(2, 1) + g(1, 1);
    let var_sum = kf * (ew4 - ew2 * ew2) + kf * (kf - 1.0) * (ew2w2 - ew2 * ew2);
    let mean = ew2 - (nf / kf).powi(2);
    (mean, (var_sum / (kf * kf)).max(0.0))
}

fn biased_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

/// Counts of ones in the `n0 + 1` slots delimited by zeros, with ones taken as
/// the more numerous symbol. Returns `(slots, n_minor, n_major)`.
pub fn dixon_slots(bits: &[u8]) -> (Vec<f64>, usize, usize) {
    let n1 = bits.iter().filter(|&&b| b == 1).count();
    let n0 = bits.len() - n1;
    let major: u8 = if n1 >= n0 { 1 } else { 0 };
    let mut slots = vec![0.0];
    for &b in bits {
        if b == major {
            *slots.last_mut().unwrap() += 1.0;
        } else {
            slots.push(0.0);
        }
    }
    (slots, n0.min(n1), n0.max(n1))
}

pub fn dixon_s2(bits: &[u8]) -> f64 {
    biased_variance(&dixon_slots(bits).0)
}

pub fn obrien76_key(n_minor: usize, n_major: usize) -> usize {
    n_minor * 1000 + n_major
}

fn gamma_two_sided(x: f64, shape: f64, scale: f64) -> f64 {
    let lower = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters").cdf(x);
    (2.0 * lower.min(1.0 - lower)).min(1.0)
}

pub fn obrien76_test(b: &BitSequence, cv: Option<&CvTable>) -> Result<TestOutcome> {
    let id = b.id(TestId::Dixob, TestId::DixobUd);
    let (slots, n_minor, n_major) = dixon_slots(&b.bits);
    let n = b.bits.len();
    if n_minor < 2 {
        return Ok(TestOutcome::skip(id, n, "fewer than 2 of the less numerous symbol"));
    }
    let s2 = biased_variance(&slots);
    if n_major <= OBRIEN76_TABLE_MAX {
        let table = cv.ok_or_else(|| Error::MissingCriticalValue { test: "obrien76".into(), n, q: 0.025 })?;
        let key = obrien76_key(n_minor, n_major);
        let lo = table.lookup(key, 0.025)?.value;
        let hi = table.lookup(key, 0.975)?.value;
        return Ok(TestOutcome::from_flag(id, s2, s2 < lo || s2 > hi, n));
    }
    let (mean, var) = composition_s2_moments(n_major, n_minor + 1);
    let p = gamma_two_sided(s2, mean * mean / var, var / mean);
    Ok(TestOutcome::from_p(id, s2, p, n))
}

fn run_lengths(bits: &[u8], symbol: u8) -> Vec<f64> {
    let mut out = Vec::new();
    let mut cur = 0.0;
    for &b in bits {
        if b == symbol {
            cur += 1.0;
        } else if cur > 0.0 {
            out.push(cur);
            cur = 0.0;
        }
    }
    if cur > 0.0 {
        out.push(cur);
    }
    out
}

pub fn obrien_dyck85_test(b: &BitSequence) -> Result<TestOutcome> {
    let id = b.id(TestId::Obri85, TestId::Obri85Ud);
    let n = b.bits.len();
    let runs = [run_lengths(&b.bits, 0), run_lengths(&b.bits, 1)];
    if runs.iter().any(|r| r.len() < 2) {
        return Ok(TestOutcome::skip(id, n, "a symbol has fewer than 2 runs"));
    }
    let (mut t, mut shape) = (0.0, 0.0);
    for r in &runs {
        let total = r.iter().sum::<f64>() as usize;
        let (mean, var) = composition_s2_moments(total - r.len(), r.len());
        if var <= 1e-12 * (1.0 + mean * mean) || mean <= 0.0 {
            continue;
        }
        let theta = var / mean;
        t += biased_variance(r) / theta;
        shape += mean * mean / var;
    }
    if shape == 0.0 {
        return Ok(TestOutcome::skip(id, n, "both run-length variances are degenerate"));
    }
    Ok(TestOutcome::from_p(id, t, gamma_two_sided(t, shape, 1.0), n))
}

/// `K₁`, its null mean and its null variance given the success count.
pub fn larsen_k1(bits: &[u8]) -> (f64, f64, f64) {
    let r: Vec<f64> = bits.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| (i + 1) as f64).collect();
    let big_n = bits.len() as f64;
    let n1 = r.len();
    let h = n1 / 2;
    let k1: f64 = (0..h).map(|j| r[n1 - 1 - j] - r[j]).sum();
    let nf = n1 as f64;
    let mean = (big_n + 1.0) / (nf + 1.0) * (h * (n1 - h)) as f64;

    let c = |i: usize| -> f64 {
        if i <= h {
            -1.0
        } else if i > n1 - h {
            1.0
        } else {
            0.0
        }
    };
    let scale = (big_n + 1.0) * (big_n - nf) / ((nf + 1.0).powi(2) * (nf + 2.0));
    let mut var = 0.0;
    let mut prefix = 0.0;
    for j in 1..=n1 {
        let cj = c(j);
        let jf = j as f64;
        var += cj * cj * jf * (nf + 1.0 - jf);
        var += 2.0 * cj * (nf + 1.0 - jf) * prefix;
        prefix += cj * jf;
    }
    (k1, mean, var * scale)
}

/// Standardized `K₁`, or `None` when the null variance vanishes.
pub fn larsen_z(bits: &[u8]) -> Option<f64> {
    if bits.iter().all(|&b| b == 0) {
        return None;
    }
    let (k1, mean, var) = larsen_k1(bits);
    (var > 1e-12).then(|| (k1 - mean) / var.sqrt())
}

pub fn larsen_test(b: &BitSequence, cv: Option<&CvTable>) -> Result<TestOutcome> {
    let id = b.id(TestId::Larsen, TestId::LarsenUd);
    let n = b.bits.len();
    let (_, n1) = b.counts();
    if n < LARSEN_MIN_N || n1 == 0 {
        return Ok(TestOutcome::skip(id, n, if n1 == 0 { "no successes".to_string() } else { format!("n = {n} < 3") }));
    }
    let Some(z) = larsen_z(&b.bits) else {
        let mut o = TestOutcome::skip(id, n, "zero null variance");
        o.statistic = Some(larsen_k1(&b.bits).0);
        return Ok(o);
    };
    if n <= LARSEN_TABLE_MAX_N {
        let table = cv.ok_or_else(|| Error::MissingCriticalValue { test: "larsen".into(), n, q: 0.025 })?;
        let lo = table.lookup(n, 0.025)?.value;
        let hi = table.lookup(n, 0.975)?.value;
        Ok(TestOutcome::from_flag(id, z, z < lo || z > hi, n))
    } else {
        Ok(TestOutcome::from_p(id, z, 2.0 * normal_sf(z.abs()), n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> BitSequence {
        BitSequence::new(s.bytes().map(|c| c - b'0').collect(), BitOrigin::IndicatorOfTwos)
    }

    #[test]
    fn autocorr_hand_example() {
        let i = autocorr_statistic(&[2, 6, 2, 6, 2, 6]).unwrap();
        assert!((i + 5.0 / 6.0).abs() < 1e-15);
        assert!(matches!(autocorr_statistic(&[4, 4, 4, 4, 4]), Err(Error::Undefined(_))));
        assert!(lag1_autocorr_test(&[2, 4, 2, 4], None).unwrap().skipped.is_some());
    }

    #[test]
    fn joint_examples() {
        assert!((joint_statistic(&[2; 20]) - 30.0).abs() < 1e-12);
        let o = joint_dist_test(&[2; 20]).unwrap();
        assert!(o.reject);
        // 16 pairs laid out exactly in proportion to 2^-(i+j)
        let mut z = Vec::new();
        let p = [(2, 8.0), (4, 4.0), (6, 4.0)];
        for &(a, pa) in &p {
            for &(b, pb) in &p {
                for _ in 0..((pa * pb / 16.0) as usize) {
                    z.extend([a, b]);
                }
            }
        }
        assert_eq!(z.len(), 32);
        assert!(joint_statistic(&z).abs() < 1e-12);
        assert!(joint_dist_test(&[2; 9]).unwrap().skipped.is_some());
    }

    #[test]
    fn runs_pmf_sums_to_one_and_matches_enumeration() {
        for (n0, n1) in [(1, 1), (3, 4), (5, 5), (2, 9)] {
            let pmf = runs_pmf(n0, n1);
            assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let n = n0 + n1;
            let mut counts = vec![0usize; n + 1];
            let mut total = 0;
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != n1 {
                    continue;
                }
                let b: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
                counts[run_count(&b)] += 1;
                total += 1;
            }
            for r in 0..=n {
                assert!((pmf[r] - counts[r] as f64 / total as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn runs_extremes_reject() {
        let o = wald_wolfowitz_runs(&bits("0101010101")).unwrap();
        assert_eq!(o.statistic, Some(10.0));
        assert!((o.p_value.unwrap() - 4.0 / 252.0).abs() < 1e-12);
        assert!(o.reject);
        let o = wald_wolfowitz_runs(&bits("0000011111")).unwrap();
        assert_eq!(o.statistic, Some(2.0));
        assert!(o.reject);
        assert!(wald_wolfowitz_runs(&bits("1111")).unwrap().skipped.is_some());
    }

    #[test]
    fn runs_label_symmetry() {
        let a = bits("0010111011000101110100110010111010001011110001011101");
        let c = BitSequence::new(a.bits.iter().map(|b| 1 - b).collect(), a.origin);
        assert_eq!(wald_wolfowitz_runs(&a).unwrap(), wald_wolfowitz_runs(&c).unwrap());
    }

    #[test]
    fn dixon_hand_example() {
        let b = bits("1101111011");
        let (slots, minor, major) = dixon_slots(&b.bits);
        assert_eq!(slots, vec![2.0, 4.0, 2.0]);
        assert_eq!((minor, major), (2, 8));
        assert!((dixon_s2(&b.bits) - 8.0 / 9.0).abs() < 1e-15);
        assert_eq!(dixon_s2(&bits("1101101101").bits), dixon_s2(&bits("0010010010").bits));
    }

    fn enumerate_s2(n: usize, k: usize) -> (f64, f64) {
        fn rec(n: usize, k: usize, cur: &mut Vec<f64>, out: &mut Vec<f64>) {
            if k == 1 {
                cur.push(n as f64);
                out.push(biased_variance(cur));
                cur.pop();
                return;
            }
            for w in 0..=n {
                cur.push(w as f64);
                rec(n - w, k - 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(n, k, &mut Vec::new(), &mut out);
        let m = out.iter().sum::<f64>() / out.len() as f64;
        let v = out.iter().map(|x| (x - m).powi(2)).sum::<f64>() / out.len() as f64;
        (m, v)
    }

    #[test]
    fn composition_moments_match_enumeration() {
        for (n, k) in [(5, 2), (7, 3), (8, 4), (10, 5), (3, 6), (1, 2)] {
            let (m, v) = composition_s2_moments(n, k);
            let (em, ev) = enumerate_s2(n, k);
            assert!((m - em).abs() < 1e-10, "mean n={n} k={k}: {m} vs {em}");
            assert!((v - ev).abs() < 1e-10, "var n={n} k={k}: {v} vs {ev}");
        }
    }

    #[test]
    fn obrien85_periodic_input() {
        let o = obrien_dyck85_test(&bits("001100110011")).unwrap();
        assert_eq!(o.statistic, Some(0.0));
        assert!(o.reject);
        assert!(obrien_dyck85_test(&bits("000111")).unwrap().skipped.is_some());
    }

    #[test]
    fn obrien85_label_symmetry() {
        let a = bits("0010111011000101110100110010111010001011110001011101");
        let c = BitSequence::new(a.bits.iter().map(|b| 1 - b).collect(), a.origin);
        let (x, y) = (obrien_dyck85_test(&a).unwrap(), obrien_dyck85_test(&c).unwrap());
        assert!((x.statistic.unwrap() - y.statistic.unwrap()).abs() < 1e-12);
        assert!((x.p_value.unwrap() - y.p_value.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn larsen_examples() {
        assert_eq!(larsen_k1(&[0, 1, 1, 1, 0]).0, 2.0);
        assert_eq!(larsen_k1(&[0, 0, 1, 0, 0]).0, 0.0);
        let o = larsen_test(&bits("00100"), None).unwrap();
        assert!(o.skipped.is_some());
        assert_eq!(o.statistic, Some(0.0));
        assert!(larsen_test(&bits("000"), None).unwrap().skipped.is_some());
    }

    #[test]
    fn larsen_moments_match_enumeration() {
        for (big_n, n1) in [(6usize, 2usize), (7, 3), (9, 4), (10, 5), (8, 7)] {
            let mut vals = Vec::new();
            for mask in 0u32..(1 << big_n) {
                if mask.count_ones() as usize != n1 {
                    continue;
                }
                let b: Vec<u8> = (0..big_n).map(|i| ((mask >> i) & 1) as u8).collect();
                vals.push(larsen_k1(&b).0);
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            let b: Vec<u8> = (0..big_n).map(|i| u8::from(i < n1)).collect();
            let (_, mean, var) = larsen_k1(&b);
            assert!((mean - m).abs() < 1e-10, "mean N={big_n} n1={n1}");
            assert!((var - v).abs() < 1e-10, "var N={big_n} n1={n1}: {var} vs {v}");
        }
    }

    #[test]
    fn indicator_examples() {
        assert_eq!(indicator_of_twos(&[2, 4, 2, 8]).bits, vec![1, 0, 1, 0]);
        assert!(indicator_of_twos(&[2; 5]).bits.iter().all(|&b| b == 1));
    }
}
