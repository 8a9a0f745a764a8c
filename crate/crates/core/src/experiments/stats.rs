use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{ExperimentError, Result};

/// Two-sided Welch test outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom; infinite when both samples
    /// have zero variance.
    pub df: f64,
    pub p_value: f64,
    /// Both samples had zero variance, so `p_value` is the 0 / 1 sentinel.
    pub degenerate: bool,
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Two-sided Welch unequal-variance t-test.
///
/// When both samples have zero variance, equal means give `p = 1` and
/// different means give `p = 0`, flagged as degenerate.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(ExperimentError::SampleSize(a.len().min(b.len())));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(ExperimentError::NonFinite);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let diff = mean(a) - mean(b);
    let (sa, sb) = (variance(a) / na, variance(b) / nb);
    let se2 = sa + sb;
    // Rounding leaves tiny variances on constant samples of non-dyadic values.
    let scale = mean(a).abs().max(mean(b).abs()).max(1.0);
    if se2.sqrt() <= 1e-12 * scale {
        let equal = diff.abs() <= 1e-12 * scale;
        return Ok(WelchTest {
            t: if equal { 0.0 } else { diff.signum() * f64::INFINITY },
            df: f64::INFINITY,
            p_value: if equal { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|_| ExperimentError::NonFinite)?;
    let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
    Ok(WelchTest {
        t,
        df,
        p_value: p,
        degenerate: false,
    })
}

/// Mean / max / SD of one model's trial accuracies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyStats {
    pub n: usize,
    pub mean: f64,
    pub max: f64,
    pub sd: f64,
}

impl AccuracyStats {
    pub fn of(acc: &[f64]) -> Result<Self> {
        if acc.is_empty() {
            return Err(ExperimentError::SampleSize(0));
        }
        Ok(Self {
            n: acc.len(),
            mean: mean(acc),
            max: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sd: if acc.len() > 1 { variance(acc).max(0.0).sqrt() } else { 0.0 },
        })
    }
}

/// Two result sets side by side with the Welch p-value between them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonReport {
    pub first: AccuracyStats,
    pub second: AccuracyStats,
    /// `None` when either side has fewer than two trials.
    pub welch: Option<WelchTest>,
}

impl ComparisonReport {
    pub fn p_value(&self) -> Option<f64> {
        self.welch.map(|w| w.p_value)
    }
}

/// Summarizes two sets of accuracies (M1 then M2, or E then A).
pub fn summarize(first: &[f64], second: &[f64]) -> Result<ComparisonReport> {
    let welch = if first.len() >= 2 && second.len() >= 2 {
        Some(welch_t_test(first, second)?)
    } else {
        None
    };
    Ok(ComparisonReport {
        first: AccuracyStats::of(first)?,
        second: AccuracyStats::of(second)?,
        welch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_p_one() {
        let a = [0.5, 0.5, 0.6];
        let w = welch_t_test(&a, &a).unwrap();
        assert_eq!(w.p_value, 1.0);
        assert!(!w.degenerate);
    }

    #[test]
    fn constant_samples_use_sentinels() {
        let a = [0.923; 5];
        let w = welch_t_test(&a, &a).unwrap();
        assert!(w.degenerate && w.p_value == 1.0);
        let w = welch_t_test(&a, &[0.5; 5]).unwrap();
        assert!(w.degenerate && w.p_value == 0.0);
    }

    #[test]
    fn one_constant_sample_is_regular() {
        let w = welch_t_test(&[0.923; 5], &[0.95, 0.96, 0.97, 0.955, 0.965]).unwrap();
        assert!(!w.degenerate);
        assert!(w.p_value > 0.0 && w.p_value < 1e-3);
        assert!((w.df - 4.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_trials() {
        assert!(welch_t_test(&[0.1], &[0.2, 0.3]).is_err());
    }

    #[test]
    fn summary_fields() {
        let r = summarize(&[0.1, 0.3], &[0.5, 0.5, 0.8]).unwrap();
        assert_eq!(r.first.max, 0.3);
        assert!((r.first.mean - 0.2).abs() < 1e-15);
        assert!((r.second.sd - 0.03f64.sqrt()).abs() < 1e-12);
        assert!(r.p_value().unwrap() > 0.0);
    }
}
