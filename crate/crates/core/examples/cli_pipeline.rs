//! The command-line pipeline driven in-process: simulate, fit, evaluate.
//! The same steps run from a shell as
//!
//!     gdrf simulate -c run.conf && gdrf fit -c run.conf && gdrf evaluate -c run.conf
//!
//!     cargo run --release --example cli_pipeline

use gdrf::cli::run;

fn main() {
    let dir = std::env::temp_dir().join("gdrf-cli-pipeline");
    let out = dir.to_string_lossy().into_owned();
    let data = dir.join("observations.csv").to_string_lossy().into_owned();
    let truth = dir.join("truth.txt").to_string_lossy().into_owned();
    let common = [
        "--lattice", "8,8", "--k", "2", "--w", "10", "--seed", "5", "--n-obs", "2000",
        "--length-scale", "3", "--n-outer", "10", "--out-dir", &out,
    ];
    let steps: [(&str, Vec<&str>); 3] = [
        ("simulate", vec![]),
        ("fit", vec!["--data", &data]),
        ("evaluate", vec!["--data", &data, "--truth", &truth, "--afmi", "true"]),
    ];
    for (command, extra) in steps {
        let args = ["gdrf", command].into_iter().chain(common).chain(extra);
        let code = run(args);
        if code != 0 {
            eprintln!("{command} exited with {code}");
            std::process::exit(code);
        }
    }
    println!("artifacts in {out}");
}
