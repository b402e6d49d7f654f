//! The `lrmp` binary end to end.

use std::process::Command;

fn lrmp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lrmp")).args(args).output().expect("binary runs")
}

fn tmpdir(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("lrmp-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn run_writes_reports() {
    let out = tmpdir("run");
    let o = lrmp(&["run", "--domain", "lshape", "--degree", "2", "--level", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = String::from_utf8(o.stdout).unwrap();
    assert!(log.starts_with("iter,residual,max_rank,eps\n"));
    for (file, header) in [
        ("iterations.csv", "domain,mode,degree,n_el,iterations,converged"),
        ("ranks.csv", "domain,mode,degree,n_el,max_rank"),
        ("memory.csv", "domain,mode,degree,n_el,memory_percent,memory_percent_full"),
        ("log.csv", "iter,residual,max_rank_u,eps,attempts,max_rank_p,eta,seconds"),
        ("matrix_ranks.csv", "i,j,k,l,r1,r2,r3"),
    ] {
        let text = std::fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{file}");
    }
    let it = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    assert!(it.lines().nth(1).unwrap().starts_with("lshape,elasticity,2,2,"));
}

#[test]
fn sweep_is_deterministic() {
    let (a, b) = (tmpdir("sweep-a"), tmpdir("sweep-b"));
    for (d, jobs) in [(&a, "1"), (&b, "2")] {
        let o = lrmp(&["sweep", "--mode", "scalar", "--domain", "cross3d", "--degrees", "1,2", "--levels", "1,2", "--jobs", jobs, "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["iterations.csv", "ranks.csv", "memory.csv", "iterations_table.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let it = std::fs::read_to_string(a.join("iterations.csv")).unwrap();
    assert_eq!(it.lines().count(), 5);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tmpdir("cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "domain = thick_ring\nmode = scalar\ndegree = 1\nlevel = 1\n").unwrap();
    let o = lrmp(&["run", "--config", cfg.to_str().unwrap(), "--degree", "2"]);
    assert!(o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("thick_ring Scalar p=2 n_el=2"), "{err}");
}

#[test]
fn bad_input_fails_cleanly() {
    let o = lrmp(&["run", "--domain", "torus"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown domain"));
    let o = lrmp(&["run", "--poisson", "0.5"]);
    assert!(!o.status.success());
}
