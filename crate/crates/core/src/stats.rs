//! ECDFs, the two-sample Kolmogorov-Smirnov test, accuracy metrics and the
//! expected-profit bet selector.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical CDF: `F(t) = #{v <= t} / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Empty("sample"));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample"));
        }
        sample.sort_by(f64::total_cmp);
        Ok(Self { sorted: sample })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }

    /// `(value, F(value))` at each distinct sample value.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            let p = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = p,
                _ => out.push((v, p)),
            }
        }
        out
    }

    /// Two-column CSV `value,cumulative_probability`, one row per sample value.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f =
            std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(f, "value,cumulative_probability").map_err(io)?;
        let n = self.sorted.len() as f64;
        for (i, v) in self.sorted.iter().enumerate() {
            writeln!(f, "{v},{}", (i + 1) as f64 / n).map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

/// Asymptotic two-sample KS critical coefficient `sqrt(-ln(alpha / 2) / 2)`;
/// 1.3581 at `alpha = 0.05`.
pub fn ks_critical_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

/// Exact `sup_t |F_a(t) - F_b(t)|` by a merged sweep over both sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(ks_statistic_sorted(&a, &b))
}

fn ks_statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let t = a[i].min(b[j]);
        while i < na && a[i] <= t {
            i += 1;
        }
        while j < nb && b[j] <= t {
            j += 1;
        }
        // compare integer cross-products so D(a, b) == D(b, a) bit for bit
        let diff = (i * nb).abs_diff(j * na) as f64 / (na * nb) as f64;
        d = d.max(diff);
    }
    d
}

pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsOutcome> {
    let statistic = ks_statistic(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let critical = ks_critical_coefficient(alpha) * ((na + nb) / (na * nb)).sqrt();
    Ok(KsOutcome {
        statistic,
        critical,
        pass: statistic <= critical,
    })
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual, 1)?;
    let s: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((s / predicted.len() as f64).sqrt())
}

fn check_pair(u: &[f64], v: &[f64], min: usize) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    if u.len() < min {
        return Err(Error::Empty("vector"));
    }
    Ok(())
}

pub fn mean(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Empty("sample"));
    }
    Ok(sample.iter().sum::<f64>() / sample.len() as f64)
}

/// Mean and `n - 1` standard deviation.
pub fn sample_mean_std(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 values for std".into(),
        ));
    }
    // shifting by the first value keeps a constant sample at exactly zero spread
    let shift = sample[0];
    let d = sample.iter().map(|v| v - shift).sum::<f64>() / sample.len() as f64;
    let var = sample
        .iter()
        .map(|v| (v - shift - d) * (v - shift - d))
        .sum::<f64>()
        / (sample.len() - 1) as f64;
    Ok((shift + d, var.sqrt()))
}

pub fn pearson(u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(u, v, 2)?;
    let mu = mean(u)?;
    let mv = mean(v)?;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if suu == 0.0 {
        return Err(Error::Degenerate("first argument"));
    }
    if svv == 0.0 {
        return Err(Error::Degenerate("second argument"));
    }
    Ok(suv / (suu.sqrt() * svv.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Home,
    Draw,
    Away,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Home, Outcome::Draw, Outcome::Away];
}

/// Stake and winnings offered per outcome, with estimated probabilities, in
/// home/draw/away order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetQuote {
    pub stake: [f64; 3],
    pub gain: [f64; 3],
    pub probability: [f64; 3],
}

impl BetQuote {
    pub fn new(stake: [f64; 3], gain: [f64; 3], probability: [f64; 3]) -> Result<Self> {
        if stake
            .iter()
            .chain(&gain)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "stakes and gains must be positive".into(),
            ));
        }
        if probability.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        if (probability.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "probabilities must sum to 1".into(),
            ));
        }
        Ok(Self {
            stake,
            gain,
            probability,
        })
    }

    /// `P W - (1 - P) B` per outcome.
    pub fn expected_profit(&self) -> [f64; 3] {
        std::array::from_fn(|i| {
            let p = self.probability[i];
            p * self.gain[i] - (1.0 - p) * self.stake[i]
        })
    }

    /// Outcome with the largest expected profit; ties go to the earlier of
    /// home, draw, away. With `allow_abstain`, returns `None` when every
    /// expected profit is negative.
    pub fn select_bet(&self, allow_abstain: bool) -> Option<Outcome> {
        let m = self.expected_profit();
        let mut best = 0;
        for i in 1..3 {
            if m[i] > m[best] {
                best = i;
            }
        }
        if allow_abstain && m[best] < 0.0 {
            None
        } else {
            Some(Outcome::ALL[best])
        }
    }
}

/// Maps a sample of predicted goal differences to home/draw/away
/// probabilities: home above `hi`, away below `lo`, draw otherwise.
pub fn probabilities_from_sample(sample: &[f64], lo: f64, hi: f64) -> Result<[f64; 3]> {
    if sample.is_empty() {
        return Err(Error::Empty("sample"));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "thresholds must satisfy {lo} < {hi}"
        )));
    }
    let n = sample.len() as f64;
    let home = sample.iter().filter(|&&v| v > hi).count() as f64 / n;
    let away = sample.iter().filter(|&&v| v < lo).count() as f64 / n;
    Ok([home, 1.0 - home - away, away])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn ecdf_examples() {
        let e = Ecdf::new(vec![4.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(e.eval(2.5), 0.5);
        assert_eq!(e.eval(0.0), 0.0);
        assert_eq!(e.eval(4.0), 1.0);
        assert_eq!(e.eval(9.0), 1.0);
        let e = Ecdf::new(vec![1.0, 1.0, 2.0]).unwrap();
        assert!((e.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.steps(), vec![(1.0, 2.0 / 3.0), (2.0, 1.0)]);
        assert!(Ecdf::new(vec![]).is_err());
        assert!(Ecdf::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn ks_examples() {
        let a = [0.1, 0.5, 0.9];
        let o = ks_two_sample(&a, &a, 0.05).unwrap();
        assert_eq!(o.statistic, 0.0);
        assert!(o.pass);
        // fully separated samples: D = 1, but with n = 3 per side the
        // asymptotic threshold 1.3581 * sqrt(2 / 3) = 1.109 exceeds 1
        let o = ks_two_sample(&[0.0; 3], &[1.0; 3], 0.05).unwrap();
        assert_eq!(o.statistic, 1.0);
        assert!((o.critical - 1.3581 * (2.0f64 / 3.0).sqrt()).abs() < 1e-4);
        assert!(o.pass);
        let o = ks_two_sample(&[0.0; 10], &[1.0; 10], 0.05).unwrap();
        assert_eq!(o.statistic, 1.0);
        assert!(!o.pass);
        assert!(ks_two_sample(&[], &a, 0.05).is_err());
        assert!((ks_critical_coefficient(0.05) - 1.3581).abs() < 1e-4);
    }

    #[test]
    fn ks_handles_ties_across_samples() {
        // F_a jumps to 1 at 1; F_b is 0.5 at 1
        let d = ks_statistic(&[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let u = [0.1, 0.7, 0.3, 0.9];
        let v: Vec<f64> = u.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson(&u, &v).unwrap() - 1.0).abs() < 1e-15);
        let (m, s) = sample_mean_std(&[0.0, 2.0]).unwrap();
        assert_eq!(m, 1.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 1.0], &[0.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(sample_mean_std(&[1.0]).is_err());
    }

    #[test]
    fn profit_examples() {
        let q = |p: f64, w: f64, b: f64| {
            BetQuote::new(
                [b, 1.0, 1.0],
                [w, 1.0, 1.0],
                [p, (1.0 - p) / 2.0, (1.0 - p) / 2.0],
            )
            .unwrap()
            .expected_profit()[0]
        };
        assert_eq!(q(0.5, 100.0, 100.0), 0.0);
        assert_eq!(q(1.0, 100.0, 30.0), 100.0);
        assert!((q(0.6, 80.0, 100.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn bet_selection_and_abstain() {
        let q = BetQuote::new([10.0; 3], [10.0; 3], [0.2, 0.5, 0.3]).unwrap();
        assert_eq!(q.select_bet(false), Some(Outcome::Draw));
        // ties prefer home
        let t = BetQuote::new([10.0; 3], [10.0; 3], [0.4, 0.4, 0.2]).unwrap();
        assert_eq!(t.select_bet(false), Some(Outcome::Home));
        let losing = BetQuote::new([10.0; 3], [1.0; 3], [0.3, 0.3, 0.4]).unwrap();
        assert_eq!(losing.select_bet(true), None);
        assert_eq!(losing.select_bet(false), Some(Outcome::Away));
        assert!(BetQuote::new([0.0, 1.0, 1.0], [1.0; 3], [0.3, 0.3, 0.4]).is_err());
        assert!(BetQuote::new([1.0; 3], [1.0; 3], [0.3, 0.3, 0.3]).is_err());
    }

    #[test]
    fn probability_mapping() {
        assert_eq!(
            probabilities_from_sample(&[2.0; 4], -0.5, 0.5).unwrap(),
            [1.0, 0.0, 0.0]
        );
        let p = probabilities_from_sample(&[-1.0, 0.0, 1.0], -0.5, 0.5).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut r = rng::seeded(2);
        let s: Vec<f64> = (0..100_000).map(|_| r.gen_range(-1.0..1.0)).collect();
        let p = probabilities_from_sample(&s, -0.5, 0.5).unwrap();
        for (v, want) in p.iter().zip([0.25, 0.5, 0.25]) {
            assert!((v - want).abs() < 0.02);
        }
        assert!(probabilities_from_sample(&[], -0.5, 0.5).is_err());
        assert!(probabilities_from_sample(&[1.0], 0.5, 0.5).is_err());
    }

    fn naive_ecdf(sample: &[f64], t: f64) -> f64 {
        sample.iter().filter(|&&v| v <= t).count() as f64 / sample.len() as f64
    }

    /// `max |F_a - F_b|` evaluated at every pooled point, O(n^2).
    fn naive_ks(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .chain(b)
            .map(|&t| (naive_ecdf(a, t) - naive_ecdf(b, t)).abs())
            .fold(0.0, f64::max)
    }

    fn small_sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 4.0), 1..40)
    }

    proptest! {
        #[test]
        fn ecdf_matches_counting(s in small_sample(), t in -6.0f64..6.0) {
            let e = Ecdf::new(s.clone()).unwrap();
            prop_assert_eq!(e.eval(t), naive_ecdf(&s, t));
        }

        #[test]
        fn ecdf_monotone_and_bounded(s in small_sample()) {
            let e = Ecdf::new(s).unwrap();
            let mut prev = 0.0;
            for i in -30..=30 {
                let f = e.eval(i as f64 / 5.0);
                prop_assert!((0.0..=1.0).contains(&f));
                prop_assert!(f >= prev);
                prev = f;
            }
            prop_assert_eq!(e.eval(f64::NEG_INFINITY), 0.0);
            prop_assert_eq!(e.eval(f64::INFINITY), 1.0);
        }

        #[test]
        fn ks_symmetric_bounded_and_exact(a in small_sample(), b in small_sample()) {
            let d = ks_statistic(&a, &b).unwrap();
            prop_assert_eq!(d, ks_statistic(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((d - naive_ks(&a, &b)).abs() < 1e-12);
            prop_assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn pearson_affine_invariant(
            u in prop::collection::vec(-10.0f64..10.0, 3..30),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let v: Vec<f64> = u.iter().enumerate().map(|(i, x)| x * x - i as f64).collect();
            if let Ok(base) = pearson(&u, &v) {
                let u2: Vec<f64> = u.iter().map(|x| scale * x + shift).collect();
                prop_assert!((pearson(&u2, &v).unwrap() - base).abs() < 1e-12);
            }
        }

        #[test]
        fn bet_choice_scale_invariant(
            stake in prop::array::uniform3(1.0f64..100.0),
            gain in prop::array::uniform3(1.0f64..100.0),
            w in prop::array::uniform3(0.01f64..1.0),
            scale in 0.01f64..100.0,
        ) {
            let total: f64 = w.iter().sum();
            let mut p = w.map(|v| v / total);
            p[2] = 1.0 - p[0] - p[1];
            prop_assume!(p[2] >= 0.0);
            let q = BetQuote::new(stake, gain, p).unwrap();
            let scaled = BetQuote::new(stake.map(|v| v * scale), gain.map(|v| v * scale), p).unwrap();
            let m = q.expected_profit();
            // skip near-ties where rounding could flip the argmax
            let mut sorted = m;
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted[2] - sorted[1] > 1e-9 * sorted[2].abs().max(1.0));
            prop_assert_eq!(q.select_bet(true), scaled.select_bet(true));
        }
    }
}
