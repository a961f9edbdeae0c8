//! Parameter sweeps driven by a TOML run configuration, as the command-line
//! `sweep` subcommand does.

use topo_squid::cli::sweep;
use topo_squid::config::RunConfig;

const SWEEPS: [&str; 3] = [
    r#"
[sweep]
parameter = "circuit.e_l"
values = [0.5, 1.0, 2.0, 4.0]
target = "separation"
"#,
    r#"
[wire]
derive_epsilon = true
[sweep]
parameter = "wire.l_wire"
values = [1.0, 2.0, 3.0]
target = "splitting"
"#,
    r#"
[spectrum]
model = "spinor"
[sweep]
parameter = "circuit.epsilon"
target = "splitting"
[sweep.range]
start = 1e-4
stop = 1.0
count = 9
scale = "log"
"#,
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for text in SWEEPS {
        let cfg = RunConfig::from_toml(text, &[])?;
        let spec = cfg.sweep.as_ref().expect("sweep section");
        println!("{} -> {:?}", spec.parameter, spec.target);
        for row in sweep(&cfg)? {
            let target = row.target.map_or("-".to_string(), |t| format!("{t:.6e}"));
            let eps = row.epsilon.map_or("-".to_string(), |e| format!("{e:.4e}"));
            println!("  {:>10.4e}  {target:>14}  ε = {eps}  {}", row.value, row.note);
        }
    }
    Ok(())
}
