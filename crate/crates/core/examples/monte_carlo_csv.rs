//! A small Monte Carlo run written to disk the way the CLI does it.
//!
//! ```text
//! cargo run --release --example monte_carlo_csv -- out_dir
//! ```

use std::path::PathBuf;

use relay_precoding::harness::{emit_results, monte_carlo, parse_config};

const CONFIG: &str = r#"
# Two powers, every variant, best of 1 and 3 inits.
system = "(2^2 x 2^4 x 2^8, 1x1)"
power_db = 10, 20
t = 0.5
realizations = 8
seed = 3
n_init = 1, 3
traces = true
"#;

fn main() -> relay_precoding::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("relay-precoding-example"));
    let config = parse_config(CONFIG)?;
    let report = monte_carlo(&config)?;
    let traces: Vec<_> = report.realizations.iter().flat_map(|r| r.traces.clone()).collect();
    let csv = emit_results(&config, &report.rows, &traces, report.flags, &out)?;

    print!("{}", std::fs::read_to_string(&csv).expect("just written"));
    println!("{} trace files, solver caps hit: {:?}", traces.len(), report.flags);
    println!("wrote {}", out.display());
    Ok(())
}
