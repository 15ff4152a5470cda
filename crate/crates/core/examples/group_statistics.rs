//! One-way ANOVA followed by Tukey-Kramer comparisons on unequal groups.

use phenoflow::stats::{one_way_anova, tukey_kramer, GroupedSample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sample = GroupedSample::new([
        ("Col-0", vec![4.1, 4.6, 5.0, 4.4, 4.8, 5.2]),
        ("ctr1", vec![2.2, 2.9, 2.5, 2.7, 2.4]),
        ("ein2", vec![4.9, 5.6, 5.3, 6.0, 5.1, 5.8, 5.5]),
    ]);
    let anova = one_way_anova(&sample)?;
    println!(
        "F({}, {}) = {:.3}, p = {:.3e}",
        anova.df_between, anova.df_within, anova.f_statistic, anova.p_value
    );
    for pair in tukey_kramer(&sample, 0.05)? {
        println!(
            "{:>6} vs {:<6} diff {:+.3}  q {:.3}  p_adj {:.4}{}",
            pair.group_a,
            pair.group_b,
            pair.mean_diff,
            pair.q,
            pair.p_adj,
            if pair.significant { "  *" } else { "" }
        );
    }
    Ok(())
}
