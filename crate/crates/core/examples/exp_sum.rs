//! Dyadic exponential sums `sum_n exp(-a 2^n) 2^{nd}` scaled by `a^d`.

use pointwalk::stats::exp_sum_bound_check;

fn main() -> pointwalk::Result<()> {
    let grid: Vec<f64> = (0..=10).map(|k| 2f64.powi(-k)).collect();
    for d in 1..=3 {
        let r = exp_sum_bound_check(&grid, d)?;
        let scaled: Vec<String> = r.rows.iter().map(|row| format!("{:.3}", row.scaled)).collect();
        println!("d = {d}: {}  last/first = {:.4}", scaled.join(" "), r.ratio_last_first);
    }
    Ok(())
}
