//! Mean sum-rate against the timesharing value, on a few realizations.

use relay_precoding::harness::{timesharing_sweep, ExperimentConfig, Series};
use relay_precoding::topology::parse_system_spec;
use relay_precoding::VariantId;

fn main() -> relay_precoding::Result<()> {
    let mut config = ExperimentConfig::new(parse_system_spec("(2^2 x 2^4 x 2^8, 1x1)")?);
    config.power_db = vec![20.0];
    config.timesharing = (1..10).map(|i| i as f64 / 10.0).collect();
    config.realizations = 10;
    config.variants = vec![VariantId::Baseline, VariantId::Final];
    config.parallel = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);

    let sweep = timesharing_sweep(&config)?;
    println!("{:>5} {:>9} {:>9} {:>9}", "t", "baseline", "final", "bound");
    for &t in &config.timesharing {
        let mean = |s| sweep.report.row(20.0, t, s, 1).map(|r| r.mean_sum_rate_bits).unwrap_or(f64::NAN);
        println!(
            "{t:>5} {:>9.4} {:>9.4} {:>9.4}",
            mean(Series::Variant(VariantId::Baseline)),
            mean(Series::Variant(VariantId::Final)),
            mean(Series::UpperBound)
        );
    }
    for o in sweep.optima.iter().filter(|o| o.series != Series::UpperBound) {
        println!("best t for {}: {} ({:.4} bits)", o.series, o.t, o.mean_sum_rate_bits);
    }
    Ok(())
}
