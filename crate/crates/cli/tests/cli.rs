use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qlhl::BitString;
use tempfile::TempDir;

fn qlhl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlhl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

fn write_bits(path: &Path, bits: &str) {
    fs::write(path, bits.parse::<BitString>().unwrap().to_file_bytes()).unwrap();
}

fn read_bits(path: &Path) -> BitString {
    BitString::read_from(fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn bound_qlhl_prints_38() {
    let dir = TempDir::new().unwrap();
    let out = qlhl(dir.path(), &["bound", "qlhl", "--hmin", "100", "--eps", "2^-32"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "38");
}

#[test]
fn budget_prints_2808() {
    let dir = TempDir::new().unwrap();
    let out = qlhl(dir.path(), &["budget", "--n", "256", "--eps", "2^-64"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "2808");
    let out = qlhl(dir.path(), &["budget", "--n", "128", "--eps", "2^-32"]);
    assert_eq!(stdout(&out), "1400");
    let out = qlhl(
        dir.path(),
        &[
            "budget",
            "--eps",
            "2^-32",
            "--lengths",
            "128,128,128,128,128,128,128,128,128",
        ],
    );
    assert_eq!(stdout(&out), "1400");
}

#[test]
fn extract_three_bit_fixture() {
    let dir = TempDir::new().unwrap();
    write_bits(&dir.path().join("x.qbits"), "110");
    write_bits(&dir.path().join("s.qbits"), "10");
    let out = qlhl(
        dir.path(),
        &[
            "extract",
            "--family",
            "modified-toeplitz",
            "--in",
            "x.qbits",
            "--seed",
            "s.qbits",
            "--m",
            "2",
            "--out",
            "z.qbits",
            "--dump-matrix",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_bits(&dir.path().join("z.qbits")), "00".parse().unwrap());
    assert_eq!(String::from_utf8_lossy(&out.stderr), "110\n001\n");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    // 10 - 2*8 + 2 < 0
    let out = qlhl(dir.path(), &["bound", "qlhl", "--hmin", "10", "--eps", "2^-8"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout(&out), "-1");
    let out = qlhl(dir.path(), &["bound", "qlhl", "--hmin", "10", "--eps", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
    let out = qlhl(dir.path(), &["alpha", "--len1", "10", "--len2", "10"]);
    assert_eq!(out.status.code(), Some(1));
    let out = qlhl(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bound_variants_and_report() {
    let dir = TempDir::new().unwrap();
    let out = qlhl(
        dir.path(),
        &[
            "bound",
            "general",
            "--hmin",
            "80",
            "--seed-hmin",
            "50",
            "--seed-len",
            "63",
            "--eps",
            "2^-20",
            "--report",
            "r.kv",
        ],
    );
    assert_eq!(stdout(&out), "29");
    let report = fs::read_to_string(dir.path().join("r.kv")).unwrap();
    assert!(report.contains("max_output_len=29"), "{report}");
    let out = qlhl(
        dir.path(),
        &[
            "bound", "public", "--len1", "128", "--len2", "256", "--eps", "2^-32", "--reveal",
        ],
    );
    assert_eq!(stdout(&out), "66");
    let out = qlhl(
        dir.path(),
        &[
            "bound",
            "case",
            "--case",
            "no-reveal",
            "--len1",
            "256",
            "--len2",
            "256",
            "--eps",
            "2^-32",
        ],
    );
    assert_eq!(stdout(&out), "194");
    let out = qlhl(
        dir.path(),
        &[
            "bound",
            "case",
            "--case",
            "revealed-key",
            "--len1",
            "256",
            "--len2",
            "256",
            "--eps",
            "2^-32",
        ],
    );
    assert_eq!(stdout(&out), "66");
    let out = qlhl(dir.path(), &["alpha", "--len1", "10", "--len2", "11"]);
    assert_eq!(stdout(&out), "alpha=10/21 seed_len=10 input_len=11");
}

#[test]
fn handshake_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let args = |dump: &'static str| {
        [
            "handshake",
            "simulate",
            "--n",
            "32",
            "--eps",
            "2^-16",
            "--rng-seed",
            "5",
            "--dump",
            dump,
        ]
    };
    let a = qlhl(dir.path(), &args("a.log"));
    let b = qlhl(dir.path(), &args("b.log"));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("outcome=success"));
    assert!(stdout(&a).contains("finals_equal=true"));
    let (la, lb) = (
        fs::read(dir.path().join("a.log")).unwrap(),
        fs::read(dir.path().join("b.log")).unwrap(),
    );
    assert_eq!(la, lb);
    assert_eq!(String::from_utf8(la).unwrap().lines().count(), 8);

    let t = qlhl(
        dir.path(),
        &[
            "handshake",
            "simulate",
            "--n",
            "32",
            "--eps",
            "2^-16",
            "--tamper",
            "m7:bit75",
        ],
    );
    assert!(
        stdout(&t).starts_with("outcome=abort by responder at m7: mac-failure"),
        "{}",
        stdout(&t)
    );
}

#[test]
fn mac_round_trip() {
    let dir = TempDir::new().unwrap();
    write_bits(&dir.path().join("m.qbits"), "1011001110001");
    let out = qlhl(
        dir.path(),
        &[
            "mac",
            "keygen",
            "--msg-len",
            "13",
            "--tag-len",
            "8",
            "--out",
            "k.qbits",
            "--rng-seed",
            "3",
        ],
    );
    assert_eq!(stdout(&out), "28");
    let out = qlhl(
        dir.path(),
        &[
            "mac",
            "auth",
            "--key",
            "k.qbits",
            "--in",
            "m.qbits",
            "--tag-len",
            "8",
            "--out",
            "t.qbits",
        ],
    );
    assert!(out.status.success());
    let out = qlhl(
        dir.path(),
        &[
            "mac", "verify", "--key", "k.qbits", "--in", "m.qbits", "--tag", "t.qbits",
        ],
    );
    assert_eq!(stdout(&out), "valid");
    write_bits(&dir.path().join("m.qbits"), "1011001110000");
    let out = qlhl(
        dir.path(),
        &[
            "mac", "verify", "--key", "k.qbits", "--in", "m.qbits", "--tag", "t.qbits",
        ],
    );
    assert_eq!(stdout(&out), "invalid");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bootstrap_pipeline() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    for (label, seed) in [("x1", "1"), ("x2", "2")] {
        let out = qlhl(
            d,
            &[
                "bootstrap",
                "sample",
                "--length",
                "200",
                "--k",
                "180",
                "--label",
                label,
                "--out",
                &format!("{label}.qbits"),
                "--spec-out",
                &format!("{label}.kv"),
                "--rng-seed",
                seed,
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    // without the independence assertion the planner refuses
    let out = qlhl(
        d,
        &[
            "bootstrap",
            "plan",
            "--x1",
            "x1.kv",
            "--x2",
            "x2.kv",
            "--out-len",
            "100",
            "--eps",
            "2^-16",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = qlhl(
        d,
        &[
            "bootstrap",
            "plan",
            "--x1",
            "x1.kv",
            "--x2",
            "x2.kv",
            "--out-len",
            "100",
            "--eps",
            "2^-16",
            "--independent",
            "--out",
            "plan.kv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = qlhl(
        d,
        &[
            "bootstrap",
            "run",
            "--plan",
            "plan.kv",
            "--x1-bits",
            "x1.qbits",
            "--x2-bits",
            "x2.qbits",
            "--out",
            "o.qbits",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_bits(&d.join("o.qbits")).len(), 100);
    // 180 + 180 - 199 - 32 + 2 = 131
    let out = qlhl(
        d,
        &[
            "bootstrap",
            "plan",
            "--x1",
            "x1.kv",
            "--x2",
            "x2.kv",
            "--out-len",
            "132",
            "--eps",
            "2^-16",
            "--independent",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn combine_private_and_public() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    for (label, seed) in [("a", "1"), ("b", "2")] {
        let out = qlhl(
            d,
            &[
                "bootstrap",
                "sample",
                "--length",
                "128",
                "--k",
                "128",
                "--label",
                label,
                "--out",
                &format!("{label}.qbits"),
                "--spec-out",
                &format!("{label}.kv"),
                "--rng-seed",
                seed,
            ],
        );
        assert!(out.status.success());
    }
    let base = [
        "combine", "--key1", "a.qbits", "--spec1", "a.kv", "--key2", "b.qbits", "--spec2", "b.kv", "--eps", "2^-16",
    ];
    let mut private = base.to_vec();
    private.extend(["--mode", "private", "--threat", "no-reveal", "--out", "p.qbits"]);
    let out = qlhl(d, &private);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // (255 + 1) / 2 - 32 + 2 = 98
    assert_eq!(stdout(&out), "98");

    write_bits(&d.join("s.qbits"), &"10".repeat(128)[..255]);
    let mut public = base.to_vec();
    public.extend([
        "--mode",
        "public",
        "--seed",
        "s.qbits",
        "--threat",
        "no-reveal",
        "--out",
        "q.qbits",
    ]);
    let out = qlhl(d, &public);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out), "226");
    public.push("--seed-predates-keys");
    assert_eq!(qlhl(d, &public).status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let dir = TempDir::new().unwrap();
    let out = qlhl(dir.path(), &["selftest"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).lines().all(|l| l.starts_with("PASS")));
}
