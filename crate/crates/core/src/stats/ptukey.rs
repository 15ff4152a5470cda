//! Studentized range distribution by numerical integration.
//!
//! With `k` groups and `ν` error degrees of freedom,
//! `P(Q > q) = ∫ f_ν(s) · R_k(q·s) ds` where `f_ν` is the density of
//! `sqrt(χ²_ν / ν)` and `R_k(w) = 1 − P(range of k standard normals < w)`.
//! `R_k` is integrated directly as
//! `k ∫ φ(z) (Φ(z)^{k−1} − (Φ(z) − Φ(z−w))^{k−1}) dz`
//! so that small tail probabilities keep their relative accuracy.

use super::special::{ln_gamma, norm_cdf, norm_pdf, norm_sf};

const GL_X: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_W: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_X.iter()
        .zip(GL_W)
        .map(|(&x, w)| w * (f(mid - half * x) + f(mid + half * x)))
        .sum::<f64>()
        * half
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gauss_legendre(f, a, m);
    let right = gauss_legendre(f, m, b);
    if depth == 0 || (left + right - whole).abs() <= tol.max(1e-15) {
        return left + right;
    }
    adaptive(f, a, m, left, 0.5 * tol, depth - 1) + adaptive(f, m, b, right, 0.5 * tol, depth - 1)
}

/// Adaptive 10-point Gauss–Legendre over `panels` equal starting panels.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = lo + h;
            adaptive(
                f,
                lo,
                hi,
                gauss_legendre(f, lo, hi),
                tol / panels as f64,
                24,
            )
        })
        .sum()
}

/// `Φ(z) − Φ(z − w)`, evaluated on the tail that avoids cancellation.
fn band(z: f64, w: f64) -> f64 {
    if z - 0.5 * w > 0.0 {
        norm_sf(z - w) - norm_sf(z)
    } else {
        norm_cdf(z) - norm_cdf(z - w)
    }
}

/// `P(range of k iid N(0,1) > w)`.
pub fn range_sf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    let km1 = (k - 1) as i32;
    let f = |z: f64| norm_pdf(z) * (norm_cdf(z).powi(km1) - band(z, w).powi(km1));
    (k as f64 * integrate(&f, -8.5, 8.5 + w, 16, 1e-12)).clamp(0.0, 1.0)
}

/// Survival function of the studentized range `Q(k, ν)`.
pub fn ptukey_sf(q: f64, k: usize, nu: f64) -> f64 {
    assert!(k >= 2, "studentized range needs at least two groups");
    if q <= 0.0 {
        return 1.0;
    }
    if !nu.is_finite() {
        return range_sf(q, k);
    }
    let half = 0.5 * nu;
    let ln_norm = half * nu.ln() - ln_gamma(half) - (half - 1.0) * std::f64::consts::LN_2;
    let density = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        (ln_norm + (nu - 1.0) * s.ln() - 0.5 * nu * s * s).exp()
    };
    let spread = 12.0 / (2.0 * nu).sqrt();
    let lo = (1.0 - spread).max(0.0);
    let hi = 1.0 + spread.max(0.0) + if nu < 4.0 { 8.0 } else { 0.0 };
    let f = |s: f64| density(s) * range_sf(q * s, k);
    integrate(&f, lo, hi, 12, 1e-10).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::special::t_sf_two_sided;

    #[test]
    fn chi_density_integrates_to_one() {
        for &nu in &[1.0, 3.0, 10.0, 250.0] {
            let half: f64 = 0.5 * nu;
            let ln_norm = half * nu.ln() - ln_gamma(half) - (half - 1.0) * std::f64::consts::LN_2;
            let d = |s: f64| {
                if s <= 0.0 {
                    0.0
                } else {
                    (ln_norm + (nu - 1.0) * s.ln() - 0.5 * nu * s * s).exp()
                }
            };
            let total = integrate(&d, 0.0, 10.0, 40, 1e-12);
            assert!((total - 1.0).abs() < 1e-8, "nu={nu}: {total}");
        }
    }

    #[test]
    fn two_groups_reduce_to_t() {
        for &(t, nu) in &[(0.7, 6.0), (2.2, 14.0), (3.9, 40.0)] {
            let via_q = ptukey_sf(std::f64::consts::SQRT_2 * t, 2, nu);
            assert!(
                (via_q - t_sf_two_sided(t, nu)).abs() < 1e-6,
                "t={t} nu={nu}"
            );
        }
    }

    #[test]
    fn infinite_df_limit() {
        // Two normals: range exceeds w with probability 2(1 − Φ(w/√2)).
        let w: f64 = 2.5;
        let exact = 2.0 * norm_sf(w / std::f64::consts::SQRT_2);
        assert!((range_sf(w, 2) - exact).abs() < 1e-10);
        assert!((ptukey_sf(w, 2, f64::INFINITY) - exact).abs() < 1e-10);
    }

    #[test]
    fn monotone_in_q() {
        let mut prev = 1.0;
        for i in 1..30 {
            let p = ptukey_sf(i as f64 * 0.25, 4, 12.0);
            assert!(p <= prev + 1e-12);
            prev = p;
        }
    }
}
