use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use qlhl::bootstrap::{plan_bootstrap_with, run_bootstrap, BootstrapPlan, WeakSourceSim};
use qlhl::bounds::{
    alpha_partition, combine_case_bound, public_seed_bound, qlhl_basic, qlhl_general, qlhl_weak_seed_penalized,
    BoundReport,
};
use qlhl::combiner::{combine_private, combine_public, CombineMode, CombineRequest, KeyId, KeyInput, Threat};
use qlhl::extractor::ExtractorParams;
use qlhl::handshake::mac::{its_mac_auth, its_mac_verify};
use qlhl::handshake::{budget, dump_transcript, run_handshake, HandshakeConfig, KeyLengths, MacKey, PartyConfig};
use qlhl::kv::KvDoc;
use qlhl::{BitString, Independence, Result, SecurityLevel, SeededHash, SourceSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::{BootstrapCmd, BoundCmd, Cli, CombineArgs, Command, ExtractArgs, Global, HandshakeCmd, MacCmd, Status};

fn read_bits(path: &Path) -> Result<BitString> {
    BitString::read_from(BufReader::new(File::open(path)?))
}

fn write_bits(path: &Path, bits: &BitString) -> Result<()> {
    bits.write_to(BufWriter::new(File::create(path)?))
}

fn read_kv(path: &Path) -> Result<KvDoc> {
    KvDoc::parse(&fs::read_to_string(path)?)
}

/// Binary for short strings, hex otherwise.
fn show(bits: &BitString) -> String {
    if bits.len() <= 256 {
        bits.to_string()
    } else {
        format!("0x{}", bits.to_hex())
    }
}

/// `2^-x` with `x` rounded to six decimals.
fn show_eps(eps: SecurityLevel) -> String {
    if eps.is_perfect() {
        return "0".into();
    }
    let x = format!("{:.6}", eps.neg_log2());
    format!("2^-{}", x.trim_end_matches('0').trim_end_matches('.'))
}

fn emit_report(global: &Global, doc: &KvDoc) -> Result<()> {
    if let Some(path) = &global.report {
        fs::write(path, doc.to_string())?;
    }
    Ok(())
}

fn print_terms(global: &Global, report: &BoundReport) {
    if global.verbose {
        for (name, value) in &report.terms {
            eprintln!("{name} = {value}");
        }
        eprintln!("out_eps = {}", show_eps(report.out_eps));
    }
}

pub fn dispatch(cli: &Cli) -> Result<Status> {
    let g = &cli.global;
    match &cli.command {
        Command::Extract(args) => extract(g, args),
        Command::Bound(cmd) => bound(g, cmd),
        Command::Alpha { len1, len2 } => {
            let a = alpha_partition(*len1, *len2)?;
            println!("alpha={} seed_len={} input_len={}", a.alpha, a.seed_len, a.input_len);
            let mut doc = KvDoc::new();
            doc.set("alpha", a.alpha)
                .set("seed_len", a.seed_len)
                .set("input_len", a.input_len);
            emit_report(g, &doc)?;
            Ok(Status::Ok)
        }
        Command::Bootstrap(cmd) => bootstrap(g, cmd),
        Command::Combine(args) => combine(g, args),
        Command::Budget { n, eps, lengths } => {
            let lengths = match lengths {
                Some(l) => {
                    let arr: [u64; 9] = l
                        .as_slice()
                        .try_into()
                        .map_err(|_| qlhl::Error::Parse(format!("--lengths needs 9 values, got {}", l.len())))?;
                    Some(KeyLengths::from_array(arr))
                }
                None => None,
            };
            let params = budget(n.unwrap_or(0), *eps, lengths)?;
            println!("{}", params.qkd_budget);
            if g.verbose {
                eprintln!(
                    "k1 = {}\nk2 = {}\nk3 = {}\nstage_penalty = {}",
                    params.k1, params.k2, params.k3, params.stage_penalty
                );
            }
            emit_report(g, &params.to_kv())?;
            Ok(Status::Ok)
        }
        Command::Handshake(HandshakeCmd::Simulate {
            n,
            eps,
            eps_qkd,
            tag_len,
            tamper,
            dump,
        }) => {
            let (init, resp) = PartyConfig::fixture_pair(g.rng_seed, *eps_qkd, *n as usize);
            let params = HandshakeConfig {
                tag_len: *tag_len,
                ..HandshakeConfig::new(*n, *eps)
            };
            let res = run_handshake(&init, &resp, &params, *tamper)?;
            println!("outcome={}", res.outcome);
            println!(
                "consumed_qkd={}",
                res.initiator.consumed_qkd.max(res.responder.consumed_qkd)
            );
            if let Some(f) = &res.init_finals {
                println!("finals_equal={}", res.init_finals == res.resp_finals);
                println!("eps={}", show_eps(f.eps));
                println!("iats={}", show(&f.iats));
            }
            if let Some(path) = dump {
                fs::write(path, dump_transcript(&res.wire))?;
            }
            if g.verbose {
                for (i, r) in res.initiator.stage_reports.iter().enumerate() {
                    eprintln!(
                        "stage {}: bound {} bits, eps {}",
                        i + 1,
                        r.max_output_len,
                        show_eps(r.out_eps)
                    );
                }
            }
            emit_report(g, &res.to_kv())?;
            Ok(Status::Ok)
        }
        Command::Mac(cmd) => mac(g, cmd),
        Command::Selftest => {
            let checks = qlhl::selftest::run_all();
            let mut doc = KvDoc::new();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                doc.set(c.name.replace(' ', "_"), c.passed);
            }
            emit_report(g, &doc)?;
            Ok(if checks.iter().all(|c| c.passed) {
                Status::Ok
            } else {
                Status::Failed
            })
        }
    }
}

fn extract(g: &Global, args: &ExtractArgs) -> Result<Status> {
    let x = read_bits(&args.input)?;
    let seed = read_bits(&args.seed)?;
    let params = ExtractorParams::new(args.family, x.len(), args.m)?;
    let hash = SeededHash::new(params, seed)?;
    if args.dump_matrix {
        for row in hash.matrix_rows()? {
            eprintln!("{row}");
        }
    }
    let out = hash.extract_fast(&x)?;
    if let Some(path) = &args.out {
        write_bits(path, &out)?;
    }
    println!("{}", show(&out));
    let mut doc = KvDoc::new();
    doc.set("family", args.family)
        .set("input_len", x.len())
        .set("output_len", out.len())
        .set("seed_len", params.seed_len())
        .set("output_hex", out.to_hex());
    emit_report(g, &doc)?;
    Ok(Status::Ok)
}

fn bound(g: &Global, cmd: &BoundCmd) -> Result<Status> {
    let report = match *cmd {
        BoundCmd::Qlhl { hmin, eps, eps_smooth } => qlhl_basic(hmin, eps_smooth, eps),
        BoundCmd::WeakSeed {
            hmin,
            seed_len,
            seed_hmin,
            eps,
            eps_smooth,
        } => qlhl_weak_seed_penalized(hmin, eps_smooth, seed_len, seed_hmin, eps),
        BoundCmd::General {
            hmin,
            seed_hmin,
            seed_len,
            eps,
            eps_input,
            eps_seed,
        } => qlhl_general(hmin, eps_input, seed_hmin, eps_seed, seed_len, eps),
        BoundCmd::Case {
            case,
            len1,
            len2,
            eps,
            eps1,
            eps2,
            lambda1,
            lambda2,
        } => combine_case_bound(case, len1, len2, eps1, eps2, eps, lambda1, lambda2),
        BoundCmd::Public {
            len1,
            len2,
            eps,
            reveal,
            eps1,
            eps2,
            eps_seed,
        } => public_seed_bound(len1, len2, eps1, eps2, eps_seed, eps, reveal),
    };
    println!("{}", report.max_output_len);
    print_terms(g, &report);
    emit_report(g, &report.to_kv())?;
    Ok(if report.feasible {
        Status::Ok
    } else {
        Status::Infeasible
    })
}

fn bootstrap(g: &Global, cmd: &BootstrapCmd) -> Result<Status> {
    match cmd {
        BootstrapCmd::Plan {
            x1,
            x2,
            out_len,
            eps,
            seed_choice,
            independent,
            out,
        } => {
            let s1 = SourceSpec::from_kv(&read_kv(x1)?)?;
            let s2 = SourceSpec::from_kv(&read_kv(x2)?)?;
            let mut ind = Independence::new();
            if *independent {
                ind.assert(&s1, &s2);
            }
            let plan = plan_bootstrap_with(&s1, &s2, *out_len, *eps, &ind, *seed_choice)?;
            let doc = plan.to_kv();
            print!("{doc}");
            if let Some(path) = out {
                fs::write(path, doc.to_string())?;
            }
            print_terms(g, &plan.report);
            emit_report(g, &doc)?;
            Ok(Status::Ok)
        }
        BootstrapCmd::Run {
            plan,
            x1_bits,
            x2_bits,
            out,
        } => {
            let plan = BootstrapPlan::from_kv(&read_kv(plan)?)?;
            let (bits, spec) = run_bootstrap(&plan, &read_bits(x1_bits)?, &read_bits(x2_bits)?)?;
            write_bits(out, &bits)?;
            println!("{}", show(&bits));
            let mut doc = KvDoc::new();
            doc.merge_prefixed("out.", &spec.to_kv())
                .merge_prefixed("plan.", &plan.to_kv());
            emit_report(g, &doc)?;
            Ok(Status::Ok)
        }
        BootstrapCmd::Sample {
            length,
            k,
            label,
            out,
            spec_out,
        } => {
            let mut sim = WeakSourceSim::flat(*length, *k, g.rng_seed)?;
            let bits = sim.sample();
            let spec = sim.spec(label)?;
            write_bits(out, &bits)?;
            fs::write(spec_out, spec.to_kv().to_string())?;
            println!("{}", show(&bits));
            emit_report(g, &spec.to_kv())?;
            Ok(Status::Ok)
        }
    }
}

fn combine(g: &Global, args: &CombineArgs) -> Result<Status> {
    let key1 = KeyInput::new(read_bits(&args.key1)?, SourceSpec::from_kv(&read_kv(&args.spec1)?)?)?;
    let key2 = KeyInput::new(read_bits(&args.key2)?, SourceSpec::from_kv(&read_kv(&args.spec2)?)?)?;
    let public = args.mode == "public";
    let mode = if public {
        let seed = args
            .seed
            .as_ref()
            .ok_or_else(|| qlhl::Error::InvalidParams("public mode needs --seed".into()))?;
        CombineMode::PublicSeed {
            seed: read_bits(seed)?,
            eps_seed: args.eps_seed,
            generated_after_keys: !args.seed_predates_keys,
        }
    } else {
        CombineMode::PrivateSeed {
            auto_truncate: !args.no_auto_truncate,
        }
    };
    let threat = if args.threat.exposes_key() {
        let key = if args.revealed == "key1" {
            KeyId::Key1
        } else {
            KeyId::Key2
        };
        Threat::revealing(args.threat, key)
    } else {
        Threat::new(args.threat)
    };
    let mut req = CombineRequest::new(key1, key2, mode, args.eps, threat).with_lambdas(args.lambda1, args.lambda2);
    if let Some(len) = args.out_len {
        req = req.with_requested(len);
    }
    if let Some(path) = &args.transcript {
        req = req.with_transcript(BitString::from_byte_slice(&fs::read(path)?));
    }
    let res = if public {
        combine_public(&req)?
    } else {
        combine_private(&req)?
    };
    write_bits(&args.out, &res.output)?;
    println!("{}", res.output.len());
    print_terms(g, &res.report);
    emit_report(g, &res.to_kv())?;
    Ok(Status::Ok)
}

fn mac(g: &Global, cmd: &MacCmd) -> Result<Status> {
    match cmd {
        MacCmd::Keygen { msg_len, tag_len, out } => {
            let mut rng = ChaCha20Rng::seed_from_u64(g.rng_seed);
            let key = BitString::random(&mut rng, MacKey::key_len(*msg_len, *tag_len));
            write_bits(out, &key)?;
            println!("{}", key.len());
            Ok(Status::Ok)
        }
        MacCmd::Auth {
            key,
            input,
            tag_len,
            out,
        } => {
            let msg = read_bits(input)?;
            let key = MacKey::from_bits(&read_bits(key)?, msg.len(), *tag_len)?;
            let tag = its_mac_auth(&key, &msg)?;
            write_bits(out, &tag)?;
            println!("{}", show(&tag));
            let mut doc = KvDoc::new();
            doc.set("msg_len", msg.len())
                .set("tag_len", tag.len())
                .set("tag_hex", tag.to_hex());
            emit_report(g, &doc)?;
            Ok(Status::Ok)
        }
        MacCmd::Verify { key, input, tag } => {
            let msg = read_bits(input)?;
            let tag = read_bits(tag)?;
            let key = MacKey::from_bits(&read_bits(key)?, msg.len(), tag.len())?;
            let valid = its_mac_verify(&key, &msg, &tag)?;
            println!("{}", if valid { "valid" } else { "invalid" });
            let mut doc = KvDoc::new();
            doc.set("valid", valid);
            emit_report(g, &doc)?;
            Ok(if valid { Status::Ok } else { Status::Failed })
        }
    }
}
