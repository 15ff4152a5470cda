//! Reference values computed once with an independent statistics package on
//! fixed-seed synthetic samples and pinned here.
use phenoflow::stats::{
    linear_fit, one_way_anova, pearson, pooled_t_test, ptukey_sf, tukey_kramer, GroupedSample,
};
const ANOVA_GROUPS: [&[f64]; 3] = [
    &[9.683, 9.223, 10.224, 7.315, 10.427, 9.517, 8.911, 10.148],
    &[8.273, 10.962, 10.103, 11.815, 11.864, 9.808, 9.8, 8.995],
    &[
        11.318, 12.979, 13.786, 12.843, 12.552, 11.199, 12.794, 11.276,
    ],
];
const ANOVA_F: f64 = 15.345909979639492;
const ANOVA_P: f64 = 7.805009804574425e-05;
const TUKEY_GROUPS: [&[f64]; 5] = [
    &[20.479, 19.595, 21.712, 20.405, 22.738, 19.184],
    &[
        23.012, 21.95, 24.893, 17.576, 23.249, 19.453, 19.763, 21.463,
    ],
    &[20.979, 21.611, 22.989, 23.355, 20.193, 22.253, 23.708],
    &[
        20.236, 19.175, 20.492, 19.473, 22.847, 18.882, 20.618, 19.521, 22.209,
    ],
    &[24.057, 27.753, 23.609, 23.266, 24.903],
];
const TUKEY_F: f64 = 6.018400465581337;
const TUKEY_F_P: f64 = 0.0011150336686407392;
const TUKEY_P: [[f64; 5]; 5] = [
    [
        1.0,
        0.9280701347249182,
        0.534907045554748,
        0.9970433357171583,
        0.003974717363203428,
    ],
    [
        0.9280701347249182,
        1.0,
        0.9166192877325994,
        0.7185750220345293,
        0.014915861121350571,
    ],
    [
        0.534907045554748,
        0.9166192877325994,
        1.0,
        0.2580508658805216,
        0.09999553317113896,
    ],
    [
        0.9970433357171583,
        0.7185750220345293,
        0.2580508658805216,
        1.0,
        0.0006780472519666292,
    ],
    [
        0.003974717363203428,
        0.014915861121350571,
        0.09999553317113896,
        0.0006780472519666292,
        1.0,
    ],
];
const PEARSON_X: &[f64] = &[
    176.147, 56.583, 180.471, 130.219, 108.522, 170.722, 140.018, 183.575, 189.065, 92.4, 168.899,
    79.256, 130.441, 98.074, 119.052, 179.559, 116.732, 216.886, 73.224, 103.199, 58.234, 42.678,
    138.092, 135.008, 119.152, 93.692, 44.366, 62.339, 141.133, 80.619, 84.119, 186.092,
];
const PEARSON_Y: &[f64] = &[
    0.805, 0.33, 0.735, 0.683, 0.576, 0.903, 0.669, 0.897, 0.989, 0.454, 0.719, 0.267, 0.621,
    0.361, 0.638, 0.816, 0.605, 0.974, 0.457, 0.447, 0.299, 0.341, 0.529, 0.632, 0.628, 0.358,
    0.18, 0.212, 0.737, 0.373, 0.378, 0.719,
];
const PEARSON_R: f64 = 0.9411103710327312;
const PEARSON_P: f64 = 1.1368957673992392e-15;
const OLS_X: &[f64] = &[
    6.891, 6.838, 6.376, 2.777, 0.677, 6.915, 3.426, 5.728, 2.878, 4.252, 5.06, 1.961, 2.949,
    0.677, 5.142, 2.744, 8.091, 6.05, 8.481, 9.696, 5.82, 9.099, 2.626, 8.909, 4.625, 4.85, 1.293,
    1.197, 3.192, 7.856, 0.18, 9.303, 1.024, 3.114, 7.049, 7.101, 9.418, 9.228, 6.994, 0.284,
];
const OLS_Y: &[f64] = &[
    17.284, 16.051, 12.864, 5.405, 0.362, 16.859, 6.992, 11.856, 7.16, 9.754, 10.143, 2.872, 7.084,
    -1.092, 12.62, 5.585, 18.76, 14.778, 19.436, 23.001, 15.049, 20.518, 7.269, 19.118, 9.32,
    11.816, 1.203, 1.342, 7.549, 19.394, -0.311, 21.362, 1.951, 6.654, 17.62, 16.881, 21.369,
    21.632, 14.477, 0.102,
];
const OLS_SLOPE: f64 = 2.442981124498507;
const OLS_INTERCEPT: f64 = -0.9597690836672452;
const OLS_R2: f64 = 0.9812468462390007;
const PTUKEY_SF: [(f64, usize, f64, f64); 5] = [
    (3.0, 3, 10.0, 0.13498341518956258),
    (4.5, 5, 30.0, 0.02600479418957169),
    (2.0, 4, 5.0, 0.5424837272173337),
    (3.5, 2, 12.0, 0.02923135795783205),
    (5.0, 6, 100.0, 0.007918336704579088),
];

fn sample<const K: usize>(groups: [&[f64]; K]) -> GroupedSample {
    GroupedSample::new(
        groups
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("g{i}"), g.to_vec())),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn anova_matches_reference() {
    let r = one_way_anova(&sample(ANOVA_GROUPS)).unwrap();
    assert_eq!((r.df_between, r.df_within), (2, 21));
    assert!(rel(r.f_statistic, ANOVA_F) < 1e-6, "F {}", r.f_statistic);
    assert!(rel(r.p_value, ANOVA_P) < 1e-6, "p {}", r.p_value);
}

#[allow(clippy::needless_range_loop)]
pub fn tukey_matches_reference() {
    let s = sample(TUKEY_GROUPS);
    let a = one_way_anova(&s).unwrap();
    assert!(rel(a.f_statistic, TUKEY_F) < 1e-6);
    assert!(rel(a.p_value, TUKEY_F_P) < 1e-6);
    let pairs = tukey_kramer(&s, 0.05).unwrap();
    assert_eq!(pairs.len(), 10);
    let mut it = pairs.iter();
    for i in 0..5 {
        for j in i + 1..5 {
            let p = it.next().unwrap();
            assert_eq!(
                (p.group_a.as_str(), p.group_b.as_str()),
                (format!("g{i}").as_str(), format!("g{j}").as_str())
            );
            assert!(
                (p.p_adj - TUKEY_P[i][j]).abs() < 1e-4,
                "{i}-{j}: {} vs {}",
                p.p_adj,
                TUKEY_P[i][j]
            );
            assert_eq!(p.significant, p.p_adj < 0.05);
        }
    }
}

pub fn pearson_matches_reference() {
    let r = pearson(PEARSON_X, PEARSON_Y).unwrap();
    assert!((r.r - PEARSON_R).abs() < 1e-9);
    assert!(rel(r.p_value, PEARSON_P) < 1e-6, "p {}", r.p_value);
}

pub fn ols_matches_reference() {
    let f = linear_fit(OLS_X, OLS_Y).unwrap();
    assert!((f.slope - OLS_SLOPE).abs() < 1e-9);
    assert!((f.intercept - OLS_INTERCEPT).abs() < 1e-9);
    assert!((f.r_squared - OLS_R2).abs() < 1e-9);
    let r = pearson(OLS_X, OLS_Y).unwrap();
    assert!((f.r_squared - r.r * r.r).abs() < 1e-12);
}

pub fn studentized_range_tail_matches_reference() {
    for (q, k, nu, expected) in PTUKEY_SF {
        let got = ptukey_sf(q, k, nu);
        assert!(
            (got - expected).abs() < 1e-6,
            "q={q} k={k} nu={nu}: {got} vs {expected}"
        );
    }
}

pub fn two_group_f_is_t_squared() {
    let (a, b) = (ANOVA_GROUPS[0], ANOVA_GROUPS[2]);
    let t = pooled_t_test(a, b).unwrap();
    let f = one_way_anova(&GroupedSample::new([("a", a.to_vec()), ("b", b.to_vec())])).unwrap();
    assert!((f.f_statistic - t.t * t.t).abs() < 1e-9);
    let q = tukey_kramer(
        &GroupedSample::new([("a", a.to_vec()), ("b", b.to_vec())]),
        0.05,
    )
    .unwrap();
    assert!((q[0].p_adj - t.p_value).abs() < 1e-4);
}

#[cfg(test)]
mod run {
    #[test]
    fn anova_matches_reference() {
        super::anova_matches_reference()
    }
    #[test]
    fn tukey_matches_reference() {
        super::tukey_matches_reference()
    }
    #[test]
    fn pearson_matches_reference() {
        super::pearson_matches_reference()
    }
    #[test]
    fn ols_matches_reference() {
        super::ols_matches_reference()
    }
    #[test]
    fn studentized_range_tail_matches_reference() {
        super::studentized_range_tail_matches_reference()
    }
    #[test]
    fn two_group_f_is_t_squared() {
        super::two_group_f_is_t_squared()
    }
}
