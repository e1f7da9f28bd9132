//! Driving the command-line harness from code with a TOML config file.
//! Flags given on the command line override values in the file.

use std::fs;

fn main() -> std::io::Result<()> {
    let dir = std::env::temp_dir().join("cobpm-cli-example");
    fs::create_dir_all(&dir)?;
    let config = dir.join("run.toml");
    fs::write(
        &config,
        "seed = 42\n\n[estimate]\nscenario = \"beta1d\"\nn = 400\niterations = 3000\nphi = \"tv,kl\"\n",
    )?;
    let out = dir.join("out");
    let code = cobpm::cli::main_with_args([
        "cobpm",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "estimate",
        "--replicas",
        "2",
    ]);
    println!("exit status {code:?}; outputs in {}", out.display());
    for entry in fs::read_dir(&out)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    Ok(())
}
