#![allow(dead_code)]

pub mod oracles;

use std::path::{Path, PathBuf};

use gdrf::cli::run;

/// Run the CLI in-process with `args` after the program name.
pub fn gdrf(args: &[&str]) -> i32 {
    run(std::iter::once("gdrf").chain(args.iter().copied()))
}

pub fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

/// A small, fast configuration on a 6x6 lattice.
pub fn tiny_config(dir: &Path) -> PathBuf {
    let out = dir.join("out");
    write(
        dir,
        "run.conf",
        &format!(
            "# tiny fixture\nlattice = 6,6\nk = 2\nw = 6\nn_obs = 100\nseed = 3\nlength_scale = 2\n\
             n_outer = 2\nn_gibbs_inner = 3\nout_dir = {}\ndata = {}\ntruth = {}\n",
            path_str(&out),
            path_str(&out.join("observations.csv")),
            path_str(&out.join("truth.txt")),
        ),
    )
}
