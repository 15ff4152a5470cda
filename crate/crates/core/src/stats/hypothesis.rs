use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ptukey::ptukey_sf;
use super::special::{f_sf, t_sf_two_sided};
use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub label: String,
    pub values: Vec<f64>,
}

/// Labelled groups of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedSample {
    pub groups: Vec<Group>,
}

impl GroupedSample {
    pub fn new<L: Into<String>>(groups: impl IntoIterator<Item = (L, Vec<f64>)>) -> Self {
        Self {
            groups: groups
                .into_iter()
                .map(|(label, values)| Group {
                    label: label.into(),
                    values,
                })
                .collect(),
        }
    }

    fn check(&self) -> Result<(), StatsError> {
        if self.groups.len() < 2 {
            return Err(StatsError::TooFewGroups(self.groups.len()));
        }
        let mut seen = HashSet::new();
        for g in &self.groups {
            if !seen.insert(g.label.as_str()) {
                return Err(StatsError::DuplicateLabel(g.label.clone()));
            }
            if g.values.len() < 2 {
                return Err(StatsError::TooFewObservations {
                    label: g.label.clone(),
                    n: g.values.len(),
                });
            }
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite(g.label.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub ms_within: f64,
    pub groups: Vec<GroupSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub group_a: String,
    pub group_b: String,
    /// mean(a) − mean(b)
    pub mean_diff: f64,
    pub q: f64,
    pub p_adj: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

pub fn one_way_anova(sample: &GroupedSample) -> Result<AnovaResult, StatsError> {
    sample.check()?;
    let k = sample.groups.len();
    let n_total: usize = sample.groups.iter().map(|g| g.values.len()).sum();
    let means: Vec<f64> = sample.groups.iter().map(|g| mean(&g.values)).collect();
    let grand = sample.groups.iter().flat_map(|g| &g.values).sum::<f64>() / n_total as f64;
    let ss_between: f64 = sample
        .groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.values.len() as f64 * (m - grand) * (m - grand))
        .sum();
    let ss_within: f64 = sample
        .groups
        .iter()
        .zip(&means)
        .map(|(g, &m)| sum_sq_dev(&g.values, m))
        .sum();
    let scale = sample
        .groups
        .iter()
        .flat_map(|g| &g.values)
        .map(|v| (v - grand).abs())
        .fold(0.0, f64::max);
    if ss_within <= f64::EPSILON * scale * scale * n_total as f64 {
        return Err(StatsError::ZeroVariance("within-group".into()));
    }
    let df_between = k - 1;
    let df_within = n_total - k;
    let ms_within = ss_within / df_within as f64;
    let f = (ss_between / df_between as f64) / ms_within;
    Ok(AnovaResult {
        f_statistic: f,
        df_between,
        df_within,
        p_value: f_sf(f, df_between as f64, df_within as f64),
        ms_within,
        groups: sample
            .groups
            .iter()
            .zip(means)
            .map(|(g, mean)| GroupSummary {
                label: g.label.clone(),
                n: g.values.len(),
                mean,
            })
            .collect(),
    })
}

/// All `k(k−1)/2` pairs in input order, with p adjusted through the
/// studentized range distribution.
pub fn tukey_kramer(
    sample: &GroupedSample,
    alpha: f64,
) -> Result<Vec<PairwiseComparison>, StatsError> {
    let anova = one_way_anova(sample)?;
    let k = anova.groups.len();
    let nu = anova.df_within as f64;
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&anova.groups[i], &anova.groups[j]);
            let diff = a.mean - b.mean;
            let se = (anova.ms_within / 2.0 * (1.0 / a.n as f64 + 1.0 / b.n as f64)).sqrt();
            let q = diff.abs() / se;
            let p_adj = ptukey_sf(q, k, nu);
            out.push(PairwiseComparison {
                group_a: a.label.clone(),
                group_b: b.label.clone(),
                mean_diff: diff,
                q,
                p_adj,
                significant: p_adj < alpha,
            });
        }
    }
    Ok(out)
}

/// Two-sample t test with pooled variance.
pub fn pooled_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    let sample = GroupedSample::new([("a", a.to_vec()), ("b", b.to_vec())]);
    let anova = one_way_anova(&sample)?;
    let (ma, mb) = (anova.groups[0].mean, anova.groups[1].mean);
    let se = (anova.ms_within * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
    let t = (ma - mb) / se;
    Ok(TTestResult {
        t,
        df: anova.df_within,
        p_value: t_sf_two_sided(t, anova.df_within as f64),
    })
}

struct Moments {
    n: usize,
    sxx: f64,
    syy: f64,
    sxy: f64,
    mx: f64,
    my: f64,
}

fn moments(x: &[f64], y: &[f64]) -> Result<Moments, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewObservations {
            label: "x".into(),
            n: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("x/y".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let m = Moments {
        n: x.len(),
        sxx: sum_sq_dev(x, mx),
        syy: sum_sq_dev(y, my),
        sxy: x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum(),
        mx,
        my,
    };
    if m.sxx == 0.0 {
        return Err(StatsError::ZeroVariance("x".into()));
    }
    if m.syy == 0.0 {
        return Err(StatsError::ZeroVariance("y".into()));
    }
    Ok(m)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    let m = moments(x, y)?;
    let r = (m.sxy / (m.sxx.sqrt() * m.syy.sqrt())).clamp(-1.0, 1.0);
    let nu = (m.n - 2) as f64;
    // ν/(ν + t²) with t = r·sqrt(ν/(1−r²)) simplifies to 1 − r².
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        super::special::beta_inc(nu / 2.0, 0.5, 1.0 - r * r).clamp(0.0, 1.0)
    };
    Ok(CorrelationResult { r, p_value, n: m.n })
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<RegressionResult, StatsError> {
    let m = moments(x, y)?;
    let slope = m.sxy / m.sxx;
    let intercept = m.my - slope * m.mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - m.my - slope * (a - m.mx);
            e * e
        })
        .sum();
    Ok(RegressionResult {
        slope,
        intercept,
        r_squared: (1.0 - ss_res / m.syy).clamp(0.0, 1.0),
        n: m.n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_groups_give_zero_f() {
        let s = GroupedSample::new([("a", vec![1.0, 2.0, 3.0]), ("b", vec![1.0, 2.0, 3.0])]);
        let r = one_way_anova(&s).unwrap();
        assert_eq!(r.f_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let pairs = tukey_kramer(&s, 0.05).unwrap();
        assert_eq!(pairs[0].q, 0.0);
        assert_eq!(pairs[0].p_adj, 1.0);
        assert!(!pairs[0].significant);
    }

    #[test]
    fn input_errors() {
        let zero = GroupedSample::new([("a", vec![5.0, 5.0]), ("b", vec![5.0, 5.0])]);
        assert!(matches!(
            one_way_anova(&zero),
            Err(StatsError::ZeroVariance(_))
        ));
        let tiny = GroupedSample::new([("a", vec![1.0]), ("b", vec![1.0, 2.0])]);
        assert!(matches!(
            one_way_anova(&tiny),
            Err(StatsError::TooFewObservations { .. })
        ));
        let dup = GroupedSample::new([("a", vec![1.0, 2.0]), ("a", vec![1.0, 3.0])]);
        assert!(matches!(
            one_way_anova(&dup),
            Err(StatsError::DuplicateLabel(_))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::LengthMismatch(..))
        ));
        assert!(matches!(
            linear_fit(&[2.0; 4], &[1.0, 2.0, 3.0, 4.0]),
            Err(StatsError::ZeroVariance(_))
        ));
    }

    #[test]
    fn exact_lines() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap().r - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap().r + 1.0).abs() < 1e-12);
        let y3: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let fit = linear_fit(&x, &y3).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    fn groups_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 2..7), 2..5)
    }

    fn sample(groups: &[Vec<f64>]) -> GroupedSample {
        GroupedSample::new(
            groups
                .iter()
                .enumerate()
                .map(|(i, g)| (format!("g{i}"), g.clone())),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn anova_affine_invariance(groups in groups_strategy(), c in -100.0f64..100.0, s in 0.1f64..10.0) {
            let base = sample(&groups);
            prop_assume!(one_way_anova(&base).is_ok());
            let moved = sample(&groups.iter().map(|g| g.iter().map(|v| s * v + c).collect()).collect::<Vec<_>>());
            let (a, b) = (one_way_anova(&base).unwrap(), one_way_anova(&moved).unwrap());
            prop_assert!((a.f_statistic - b.f_statistic).abs() <= 1e-9 * a.f_statistic.max(1.0));
            prop_assert!((0.0..=1.0).contains(&a.p_value));
        }

        #[test]
        fn anova_permutation_invariance(groups in groups_strategy()) {
            let base = sample(&groups);
            prop_assume!(one_way_anova(&base).is_ok());
            let mut shuffled: Vec<Group> = base.groups.iter().rev().map(|g| {
                let mut v = g.values.clone();
                v.reverse();
                Group { label: g.label.clone(), values: v }
            }).collect();
            shuffled.rotate_left(1);
            let other = GroupedSample { groups: shuffled };
            let (a, b) = (one_way_anova(&base).unwrap(), one_way_anova(&other).unwrap());
            prop_assert!((a.f_statistic - b.f_statistic).abs() <= 1e-9 * a.f_statistic.max(1.0));
        }

        #[test]
        fn two_groups_f_equals_t_squared(a in proptest::collection::vec(-20.0f64..20.0, 2..10),
                                         b in proptest::collection::vec(-20.0f64..20.0, 2..10)) {
            let s = GroupedSample::new([("a", a.clone()), ("b", b.clone())]);
            prop_assume!(one_way_anova(&s).is_ok());
            let f = one_way_anova(&s).unwrap().f_statistic;
            let t = pooled_t_test(&a, &b).unwrap().t;
            prop_assert!((f - t * t).abs() <= 1e-9 * f.max(1.0));
        }

        #[test]
        fn r_squared_matches_pearson(x in proptest::collection::vec(-100.0f64..100.0, 3..30), seed in any::<u64>()) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 0.5 * v + ((seed.wrapping_add(i as u64) % 97) as f64)).collect();
            prop_assume!(pearson(&x, &y).is_ok());
            let r = pearson(&x, &y).unwrap().r;
            let fit = linear_fit(&x, &y).unwrap();
            prop_assert!((fit.r_squared - r * r).abs() < 1e-12);
        }
    }
}
