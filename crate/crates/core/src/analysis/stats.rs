use super::AnalysisError;
use crate::leakage::{Label, TraceSet};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::ops::Range;
use std::sync::Arc;

/// Field-standard TVLA threshold.
pub const TVLA_THRESHOLD: f64 = 4.5;

/// Streaming per-sample moments up to the fourth: `m_k` holds the sum of
/// `(x - mean)^k`. Updates and merges use the one-pass pairwise formulas.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub m3: Vec<f64>,
    pub m4: Vec<f64>,
}

impl Moments {
    pub fn new(n_samples: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; n_samples],
            m2: vec![0.0; n_samples],
            m3: vec![0.0; n_samples],
            m4: vec![0.0; n_samples],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn add<T: Copy + Into<f64>>(&mut self, x: &[T]) {
        assert_eq!(x.len(), self.len(), "sample count mismatch");
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        for (j, &v) in x.iter().enumerate() {
            let delta = v.into() - self.mean[j];
            let dn = delta / n;
            let dn2 = dn * dn;
            let term1 = delta * dn * n1;
            self.mean[j] += dn;
            self.m4[j] += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2[j]
                - 4.0 * dn * self.m3[j];
            self.m3[j] += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2[j];
            self.m2[j] += term1;
        }
    }

    pub fn merge(&mut self, o: &Moments) {
        assert_eq!(o.len(), self.len(), "sample count mismatch");
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = o.clone();
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        for j in 0..self.len() {
            let d = o.mean[j] - self.mean[j];
            let (d2, d3, d4) = (d * d, d * d * d, d * d * d * d);
            let (m2a, m3a) = (self.m2[j], self.m3[j]);
            let (m2b, m3b) = (o.m2[j], o.m3[j]);
            self.mean[j] += d * nb / n;
            self.m4[j] += o.m4[j]
                + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                + 6.0 * d2 * (na * na * m2b + nb * nb * m2a) / (n * n)
                + 4.0 * d * (na * m3b - nb * m3a) / n;
            self.m3[j] +=
                m3b + d3 * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * m2b - nb * m2a) / n;
            self.m2[j] += m2b + d2 * na * nb / n;
        }
        self.n += o.n;
    }

    /// Central moment `k` (2..=4) normalized by `n`.
    pub fn central(&self, k: usize, j: usize) -> f64 {
        let m = match k {
            2 => self.m2[j],
            3 => self.m3[j],
            4 => self.m4[j],
            _ => panic!("central moment {k} not tracked"),
        };
        m / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self, j: usize) -> f64 {
        self.m2[j] / (self.n as f64 - 1.0)
    }
}

/// Moments of the fixed and random classes.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamStats {
    pub fixed: Moments,
    pub random: Moments,
}

impl StreamStats {
    pub fn new(n_samples: usize) -> Self {
        Self {
            fixed: Moments::new(n_samples),
            random: Moments::new(n_samples),
        }
    }

    pub fn add<T: Copy + Into<f64>>(&mut self, label: Label, x: &[T]) {
        match label {
            Label::Fixed => self.fixed.add(x),
            Label::Random => self.random.add(x),
        }
    }

    pub fn merge(&mut self, o: &StreamStats) {
        self.fixed.merge(&o.fixed);
        self.random.merge(&o.random);
    }

    fn check(&self) -> Result<(), AnalysisError> {
        for (name, m) in [("fixed", &self.fixed), ("random", &self.random)] {
            if m.n < 2 {
                return Err(AnalysisError::TooFewTraces {
                    class: name,
                    n: m.n,
                });
            }
        }
        Ok(())
    }
}

fn t_score(num: f64, den2: f64) -> f64 {
    if den2 > 0.0 {
        num / den2.sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        num.signum() * f64::INFINITY
    }
}

/// Welch's t per sample, `(mean_f - mean_r) / sqrt(s_f^2/n_f + s_r^2/n_r)`.
pub fn welch_t(fixed: &Moments, random: &Moments) -> Result<Vec<f64>, AnalysisError> {
    StreamStats {
        fixed: fixed.clone(),
        random: random.clone(),
    }
    .check()?;
    let (nf, nr) = (fixed.n as f64, random.n as f64);
    Ok((0..fixed.len())
        .map(|j| {
            t_score(
                fixed.mean[j] - random.mean[j],
                fixed.variance(j) / nf + random.variance(j) / nr,
            )
        })
        .collect())
}

/// Univariate second-order t: samples are centered on the pooled mean and
/// squared; class mean and variance of the squares come from the central
/// moments shifted by each class's offset from the pooled mean.
pub fn welch_t_second_order(fixed: &Moments, random: &Moments) -> Result<Vec<f64>, AnalysisError> {
    StreamStats {
        fixed: fixed.clone(),
        random: random.clone(),
    }
    .check()?;
    let (nf, nr) = (fixed.n as f64, random.n as f64);
    Ok((0..fixed.len())
        .map(|j| {
            let pooled = (nf * fixed.mean[j] + nr * random.mean[j]) / (nf + nr);
            let class = |m: &Moments| {
                let d = m.mean[j] - pooled;
                let (c2, c3, c4) = (m.central(2, j), m.central(3, j), m.central(4, j));
                let mean = c2 + d * d;
                let raw4 = c4 + 4.0 * d * c3 + 6.0 * d * d * c2 + d * d * d * d;
                let n = m.n as f64;
                let var = ((raw4 - mean * mean) * n / (n - 1.0)).max(0.0);
                (mean, var / n)
            };
            let (mf, vf) = class(fixed);
            let (mr, vr) = class(random);
            t_score(mf - mr, vf + vr)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TTestReport {
    pub t: Vec<f64>,
    pub max_abs_t: f64,
    pub threshold: f64,
    pub first_crossing_sample: Option<usize>,
    pub n_fixed: u64,
    pub n_random: u64,
}

impl TTestReport {
    pub fn new(t: Vec<f64>, n_fixed: u64, n_random: u64) -> Self {
        let max_abs_t = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let first_crossing_sample = t.iter().position(|v| v.abs() >= TVLA_THRESHOLD);
        Self {
            t,
            max_abs_t,
            threshold: TVLA_THRESHOLD,
            first_crossing_sample,
            n_fixed,
            n_random,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_abs_t < self.threshold
    }

    /// Largest `|t|` inside `range` (clipped to the report).
    pub fn max_abs_in(&self, range: Range<usize>) -> f64 {
        let end = range.end.min(self.t.len());
        self.t[range.start.min(end)..end]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestOrder {
    First,
    Second,
    Frequency,
}

/// Mergeable fixed-vs-random accumulator for one test order.
#[derive(Clone)]
pub struct Tvla {
    order: TestOrder,
    n_samples: usize,
    stats: StreamStats,
    fft: Option<Arc<dyn Fft<f64>>>,
    buf: Vec<Complex<f64>>,
}

impl Tvla {
    pub fn new(order: TestOrder, n_samples: usize) -> Result<Self, AnalysisError> {
        let (features, fft) = match order {
            TestOrder::Frequency => {
                if n_samples < 2 {
                    return Err(AnalysisError::TooFewSamples(n_samples));
                }
                let fft = FftPlanner::new().plan_fft_forward(n_samples);
                (n_samples / 2 + 1, Some(fft))
            }
            _ => (n_samples, None),
        };
        Ok(Self {
            order,
            n_samples,
            stats: StreamStats::new(features),
            fft,
            buf: Vec::new(),
        })
    }

    pub fn order(&self) -> TestOrder {
        self.order
    }

    pub fn stats(&self) -> &StreamStats {
        &self.stats
    }

    pub fn add(&mut self, label: Label, samples: &[f32]) {
        assert_eq!(samples.len(), self.n_samples, "sample count mismatch");
        match &self.fft {
            None => self.stats.add(label, samples),
            Some(fft) => {
                let spectrum = magnitude_spectrum(fft.as_ref(), samples, &mut self.buf);
                self.stats.add(label, &spectrum);
            }
        }
    }

    pub fn merge(&mut self, o: &Tvla) {
        assert_eq!(self.order, o.order);
        self.stats.merge(&o.stats);
    }

    pub fn report(&self) -> Result<TTestReport, AnalysisError> {
        let s = &self.stats;
        let t = match self.order {
            TestOrder::First | TestOrder::Frequency => welch_t(&s.fixed, &s.random)?,
            TestOrder::Second => welch_t_second_order(&s.fixed, &s.random)?,
        };
        Ok(TTestReport::new(t, s.fixed.n, s.random.n))
    }
}

/// `|X_k|` for bins `0..=n/2` of the real input.
pub fn magnitude_spectrum(fft: &dyn Fft<f64>, x: &[f32], buf: &mut Vec<Complex<f64>>) -> Vec<f64> {
    buf.clear();
    buf.extend(x.iter().map(|&v| Complex::new(v as f64, 0.0)));
    fft.process(buf);
    buf[..x.len() / 2 + 1].iter().map(|c| c.norm()).collect()
}

fn tvla(set: &TraceSet, order: TestOrder) -> Result<TTestReport, AnalysisError> {
    let mut acc = Tvla::new(order, set.n_samples)?;
    for t in &set.traces {
        acc.add(t.label, &t.samples);
    }
    acc.report()
}

pub fn tvla_first_order(set: &TraceSet) -> Result<TTestReport, AnalysisError> {
    tvla(set, TestOrder::First)
}

pub fn tvla_second_order(set: &TraceSet) -> Result<TTestReport, AnalysisError> {
    tvla(set, TestOrder::Second)
}

/// Welch's t on magnitude spectra, one entry per frequency bin.
pub fn tvla_frequency(set: &TraceSet) -> Result<TTestReport, AnalysisError> {
    tvla(set, TestOrder::Frequency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::Trace;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn moments_of(rows: &[Vec<f64>]) -> Moments {
        let mut m = Moments::new(rows[0].len());
        for r in rows {
            m.add(r);
        }
        m
    }

    /// Two-pass oracle: mean, then central sums.
    fn two_pass(rows: &[Vec<f64>], j: usize) -> [f64; 4] {
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let c = |k: i32| rows.iter().map(|r| (r[j] - mean).powi(k)).sum::<f64>();
        [mean, c(2), c(3), c(4)]
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
    }

    fn rows(seed: u64, n: usize, width: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..width)
                    .map(|j| 100.0 + j as f64 + 3.0 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn streaming_matches_two_pass() {
        let data = rows(1, 5000, 3);
        let m = moments_of(&data);
        for j in 0..3 {
            let [mean, c2, c3, c4] = two_pass(&data, j);
            assert!(rel_close(m.mean[j], mean, 1e-6));
            assert!(rel_close(m.m2[j], c2, 1e-6));
            assert!((m.m3[j] - c3).abs() <= 1e-6 * c2.powf(1.5));
            assert!(rel_close(m.m4[j], c4, 1e-6));
        }
    }

    #[test]
    fn closed_form_welch() {
        // Means 10 and 0, unit sample variance, 100 traces each.
        let mut f = Moments::new(1);
        let mut r = Moments::new(1);
        for i in 0..100 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 } * (99.0f64 / 100.0).sqrt();
            f.add(&[10.0 + s]);
            r.add(&[s]);
        }
        assert_relative_eq!(f.variance(0), 1.0, epsilon = 1e-12);
        let t = welch_t(&f, &r).unwrap()[0];
        assert!((t - 70.7107).abs() < 0.01, "{t}");
    }

    #[test]
    fn identical_classes_give_zero() {
        let data = rows(2, 50, 4);
        let m = moments_of(&data);
        assert!(welch_t(&m, &m).unwrap().iter().all(|&t| t == 0.0));
        assert!(welch_t_second_order(&m, &m)
            .unwrap()
            .iter()
            .all(|&t| t.abs() < 1e-9));
        let c = moments_of(&vec![vec![3.0]; 5]);
        assert_eq!(welch_t(&c, &c).unwrap(), vec![0.0]);
        assert_eq!(welch_t_second_order(&c, &c).unwrap(), vec![0.0]);
    }

    #[test]
    fn too_few_traces() {
        let m = moments_of(&rows(3, 5, 2));
        let one = moments_of(&rows(4, 1, 2));
        assert!(matches!(
            welch_t(&m, &one),
            Err(AnalysisError::TooFewTraces {
                class: "random",
                n: 1
            })
        ));
        let empty = TraceSet {
            n_samples: 2,
            traces: (0..4)
                .map(|i| Trace {
                    trace_index: i,
                    label: Label::Fixed,
                    samples: vec![1.0, 2.0],
                    input: vec![],
                })
                .collect(),
        };
        assert!(tvla_first_order(&empty).is_err());
    }

    #[test]
    fn second_order_detects_variance_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = Moments::new(1);
        let mut r = Moments::new(1);
        for _ in 0..5000 {
            let z: f64 = rng.sample(StandardNormal);
            f.add(&[z]);
            let z: f64 = rng.sample(StandardNormal);
            r.add(&[2.0 * z]);
        }
        assert!(welch_t(&f, &r).unwrap()[0].abs() < 4.5);
        assert!(welch_t_second_order(&f, &r).unwrap()[0] < -20.0);
    }

    #[test]
    fn second_order_matches_explicit_preprocessing() {
        let f = rows(6, 300, 2);
        let r: Vec<Vec<f64>> = rows(7, 200, 2);
        let (mf, mr) = (moments_of(&f), moments_of(&r));
        let t = welch_t_second_order(&mf, &mr).unwrap();
        for j in 0..2 {
            let all: Vec<f64> = f.iter().chain(&r).map(|x| x[j]).collect();
            let pooled = all.iter().sum::<f64>() / all.len() as f64;
            let sq = |rs: &[Vec<f64>]| {
                moments_of(
                    &rs.iter()
                        .map(|x| vec![(x[j] - pooled).powi(2)])
                        .collect::<Vec<_>>(),
                )
            };
            let want = welch_t(&sq(&f), &sq(&r)).unwrap()[0];
            assert!((t[j] - want).abs() < 1e-6, "{} vs {want}", t[j]);
        }
    }

    #[test]
    fn frequency_constant_traces() {
        let mut acc = Tvla::new(TestOrder::Frequency, 8).unwrap();
        for i in 0..10 {
            let label = if i % 2 == 0 {
                Label::Fixed
            } else {
                Label::Random
            };
            acc.add(label, &[2.0; 8]);
        }
        let s = &acc.stats().fixed;
        assert_relative_eq!(s.mean[0], 16.0, epsilon = 1e-9);
        assert!(s.mean[1..].iter().all(|&v| v.abs() < 1e-9));
        assert!(acc.report().unwrap().t.iter().all(|&t| t == 0.0));
        assert!(Tvla::new(TestOrder::Frequency, 1).is_err());
    }

    #[test]
    fn report_threshold() {
        let r = TTestReport::new(vec![0.5, -4.6, 3.0], 10, 10);
        assert_eq!(r.first_crossing_sample, Some(1));
        assert!(!r.passed());
        assert_eq!(r.max_abs_in(2..9), 3.0);
        assert!(TTestReport::new(vec![4.49], 2, 2).passed());
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(
            a in prop::collection::vec(-1e3f64..1e3, 2..40),
            b in prop::collection::vec(-1e3f64..1e3, 2..40),
            c in prop::collection::vec(-1e3f64..1e3, 2..40),
        ) {
            let m = |v: &[f64]| moments_of(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>());
            let (ma, mb, mc) = (m(&a), m(&b), m(&c));
            let mut left = ma.clone();
            left.merge(&mb);
            left.merge(&mc);
            let mut bc = mb.clone();
            bc.merge(&mc);
            let mut right = ma.clone();
            right.merge(&bc);
            let mut swapped = mc.clone();
            swapped.merge(&mb);
            swapped.merge(&ma);
            let all: Vec<f64> = a.iter().chain(&b).chain(&c).copied().collect();
            let whole = m(&all);
            for other in [&right, &swapped, &whole] {
                prop_assert!(rel_close(left.mean[0], other.mean[0], 1e-9));
                prop_assert!(rel_close(left.m2[0], other.m2[0], 1e-9));
                prop_assert!((left.m3[0] - other.m3[0]).abs() <= 1e-9 * left.m2[0].powf(1.5).max(1e-9));
                prop_assert!(rel_close(left.m4[0], other.m4[0], 1e-9));
            }
        }

        #[test]
        fn welch_is_antisymmetric(
            a in prop::collection::vec(-50f64..50.0, 2..30),
            b in prop::collection::vec(-50f64..50.0, 2..30),
        ) {
            let m = |v: &[f64]| moments_of(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>());
            let (ma, mb) = (m(&a), m(&b));
            prop_assert_eq!(welch_t(&ma, &mb).unwrap()[0], -welch_t(&mb, &ma).unwrap()[0]);
        }
    }
}
