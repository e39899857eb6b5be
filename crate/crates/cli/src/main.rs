//! Command-line front end for the walklab random-walk laboratory.
//!
//! Every subcommand resolves a run configuration, executes the requested
//! estimator and emits a JSON report (stdout or `--out`), with optional CSV
//! dumps of the embedded sequences. Reports are byte-identical across runs
//! for equal configuration and seed; the timestamp lives in a separate
//! `meta` block. Errors are values with categories, mapped to exit codes:
//! 2 config, 3 resource, 4 domain, 5 io.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use walklab::boundary;
use walklab::dlvp;
use walklab::estimators::{self, McConfig};
use walklab::groups::GroupDescriptor;
use walklab::measures::{ConvolutionCaps, SparseMeasure};
use walklab::spectra;
use walklab::weights::{Weight, WeightSpec};

#[derive(Parser)]
#[command(
    name = "walklab",
    version,
    about = "Random-walk asymptotics laboratory: entropies, Lyapunov exponents, \
             spectral radii and boundary pairings on finitely generated groups. \
             All numeric output is in nats."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also dump every embedded sequence as `<name>.csv` in this directory.
    #[arg(long, global = true)]
    csv_dir: Option<PathBuf>,
}

#[derive(Args, Serialize, Clone)]
struct CommonOpts {
    /// Group spec: `free:2`, `abelian:2`, `cyclic:6`, `lamplighter:1`, or
    /// inline JSON like `{"family":"free","rank":2}`.
    #[arg(long, default_value = "free:2")]
    group: String,
    /// Measure spec: `preset:srw`, `preset:lazy-srw:hold=0.5`, `@file.json`,
    /// or inline JSON with explicit atoms.
    #[arg(long, default_value = "preset:srw")]
    measure: String,
    /// Support cap for convolution powers.
    #[arg(long, default_value_t = walklab::groups::DEFAULT_ELEMENT_CAP)]
    support_cap: usize,
    /// Seed for any stochastic path (mandatory where sampling is involved).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Avez entropy h = lim H(mu^{*n})/n with optional Monte Carlo check.
    Entropy {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 200)]
        nmax: u32,
        /// Monte Carlo cross-check: path length.
        #[arg(long)]
        mc_n: Option<usize>,
        /// Monte Carlo cross-check: number of paths.
        #[arg(long, default_value_t = 100_000)]
        mc_count: usize,
    },
    /// Lyapunov exponent of a weight, by definition and/or through radii.
    Lyapunov {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "poly:d=1")]
        weight: String,
        /// One of `direct`, `radius`, `both`.
        #[arg(long, default_value = "both")]
        route: String,
        #[arg(long, default_value_t = 500)]
        nmax: u32,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
        p_grid: Vec<f64>,
    },
    /// Weighted Shannon limit and weighted Avez entropy.
    WeightedEntropy {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "poly:d=1")]
        weight: String,
        #[arg(long, default_value_t = 200)]
        nmax: u32,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "2,4,8,16,32,64,128,256,512"
        )]
        p_grid: Vec<f64>,
    },
    /// Convolution entropy c = lim_p -p log r_{PF_q}(mu).
    ConvEntropy {
        #[command(flatten)]
        common: CommonOpts,
        /// Rapid-decay degree d for the upper route.
        #[arg(long, default_value_t = 2.0)]
        d: f64,
        #[arg(long, default_value_t = 400)]
        nmax: u32,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
        p_grid: Vec<f64>,
    },
    /// Spectral radius estimates in l1(G, omega_p), PF_2 or PF_q.
    SpectralRadius {
        #[command(flatten)]
        common: CommonOpts,
        /// One of `l1w`, `pf2`, `pfq-lower`, `pfq-upper`.
        #[arg(long, default_value = "pf2")]
        space: String,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value = "const:1")]
        weight: String,
        /// Exponent p of omega_p in the l1w space.
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Rapid-decay degree for pfq-upper.
        #[arg(long, default_value_t = 2.0)]
        d: f64,
        #[arg(long, default_value_t = 500)]
        nmax: u32,
    },
    /// Fundamental inequality h <= v_S * speed plus per-weight bounds.
    Inequalities {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_delimiter = ',', default_value = "poly:d=1,exp:a=1.5")]
        weights: Vec<String>,
        #[arg(long, default_value_t = 300)]
        nmax: u32,
    },
    /// Boundary quantities on the free group: Xi, Furstenberg entropy,
    /// the Xi entropy limit, or Koopman pairings.
    Boundary {
        /// Free rank k >= 2.
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// One of `xi`, `furstenberg`, `xi-limit`, `koopman`.
        #[arg(long, default_value = "furstenberg")]
        quantity: String,
        /// Group element as a word literal, for `xi`.
        #[arg(long, default_value = "a")]
        s: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 300)]
        nmax: u32,
        #[arg(long, default_value_t = 8)]
        iters: usize,
    },
    /// Build and emit the de la Vallee Poussin bundle for log(1+L).
    Dlvp {
        #[command(flatten)]
        common: CommonOpts,
        /// Number of thresholds to construct.
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// Write the bundle JSON here.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Run the theorem-keyed verification suites.
    Verify {
        /// `all` or a suite-name prefix.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Re-emit an existing JSON report (round-trip check + CSV extraction).
    Report {
        /// Path to a previously written report.
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            let (category, message) = match err.downcast_ref::<walklab::Error>() {
                Some(e) => (e.category().as_str(), e.to_string()),
                None => {
                    if err.downcast_ref::<std::io::Error>().is_some() {
                        ("io", err.to_string())
                    } else {
                        ("config", err.to_string())
                    }
                }
            };
            let payload = serde_json::json!({
                "error": {"category": category, "message": message}
            });
            eprintln!("{}", serde_json::to_string_pretty(&payload).expect("json"));
            match category {
                "config" => ExitCode::from(2),
                "resource" => ExitCode::from(3),
                "domain" => ExitCode::from(4),
                _ => ExitCode::from(5),
            }
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Entropy {
            common,
            nmax,
            mc_n,
            mc_count,
        } => {
            let (mu, caps) = resolve_measure(common)?;
            let mc = match mc_n {
                Some(n) => {
                    let seed = common.seed.ok_or_else(|| {
                        walklab::Error::InvalidParameter(
                            "--seed is mandatory for the Monte Carlo cross-check".into(),
                        )
                    })?;
                    Some(McConfig {
                        n: *n,
                        count: *mc_count,
                        seed,
                    })
                }
                None => None,
            };
            let report = estimators::avez_entropy(&mu, *nmax, mc, &caps)?;
            emit_report(
                cli,
                serde_json::json!({"command": "entropy", "common": common, "nmax": nmax}),
                serde_json::to_value(&report)?,
            )?;
        }
        Command::Lyapunov {
            common,
            weight,
            route,
            nmax,
            p_grid,
        } => {
            let (mu, caps) = resolve_measure(common)?;
            let w = WeightSpec::parse(weight)?.build(&mu, &caps)?;
            let mut out = BTreeMap::new();
            if route == "direct" || route == "both" {
                out.insert(
                    "direct",
                    serde_json::to_value(estimators::lyapunov_direct(&mu, &w, *nmax, &caps)?)?,
                );
            }
            if route == "radius" || route == "both" {
                out.insert(
                    "via-radius",
                    serde_json::to_value(estimators::lyapunov_via_radius(
                        &mu, &w, p_grid, *nmax, &caps,
                    )?)?,
                );
            }
            if out.is_empty() {
                anyhow::bail!(walklab::Error::InvalidParameter(format!(
                    "unknown route {route:?}: use direct|radius|both"
                )));
            }
            emit_report(
                cli,
                serde_json::json!({
                    "command": "lyapunov", "common": common, "weight": weight,
                    "route": route, "nmax": nmax, "p_grid": p_grid,
                }),
                serde_json::to_value(&out)?,
            )?;
        }
        Command::WeightedEntropy {
            common,
            weight,
            nmax,
            p_grid,
        } => {
            let (mu, caps) = resolve_measure(common)?;
            let w = WeightSpec::parse(weight)?.build(&mu, &caps)?;
            let shannon = estimators::weighted_shannon_limit(&mu, &w, p_grid)?;
            let avez = estimators::weighted_avez_entropy(&mu, &w, *nmax, &caps)?;
            emit_report(
                cli,
                serde_json::json!({
                    "command": "weighted-entropy", "common": common,
                    "weight": weight, "nmax": nmax, "p_grid": p_grid,
                }),
                serde_json::json!({"shannon_limit": shannon, "avez": avez}),
            )?;
        }
        Command::ConvEntropy {
            common,
            d,
            nmax,
            p_grid,
        } => {
            let (mu, caps) = resolve_measure(common)?;
            let report = estimators::convolution_entropy(&mu, p_grid, *nmax, *d, &caps)?;
            emit_report(
                cli,
                serde_json::json!({
                    "command": "conv-entropy", "common": common, "d": d,
                    "nmax": nmax, "p_grid": p_grid,
                }),
                serde_json::to_value(&report)?,
            )?;
        }
        Command::SpectralRadius {
            common,
            space,
            q,
            weight,
            p,
            d,
            nmax,
        } => {
            let (mu, caps) = resolve_measure(common)?;
            let est = match space.as_str() {
                "l1w" => {
                    let w = WeightSpec::parse(weight)?.build(&mu, &caps)?;
                    spectra::radius_l1_weighted(&mu, &w, *p, *nmax, &caps)?
                }
                "pf2" => spectra::radius_pf2_symmetric(&mu, *nmax, &caps)?,
                "pfq-lower" => spectra::radius_pfq_lower(&mu, *q, *nmax, &caps)?,
                "pfq-upper" => spectra::radius_pfq_upper_rd(&mu, *q, *d, *nmax, &caps)?,
                other => anyhow::bail!(walklab::Error::InvalidParameter(format!(
                    "unknown space {other:?}: use l1w|pf2|pfq-lower|pfq-upper"
                ))),
            };
            emit_report(
                cli,
                serde_json::json!({
                    "command": "spectral-radius", "common": common, "space": space,
                    "q": q, "weight": weight, "p": p, "d": d, "nmax": nmax,
                }),
                serde_json::to_value(&est)?,
            )?;
        }
        Command::Inequalities {
            common,
            weights,
            nmax,
        } => {
            let (mu, caps) = resolve_measure(common)?;
            let mut named: Vec<(String, Weight)> = Vec::new();
            for spec in weights {
                named.push((spec.clone(), WeightSpec::parse(spec)?.build(&mu, &caps)?));
            }
            let dash = estimators::fundamental_inequality_report(&mu, &named, *nmax, &caps)?;
            emit_report(
                cli,
                serde_json::json!({
                    "command": "inequalities", "common": common,
                    "weights": weights, "nmax": nmax,
                }),
                serde_json::to_value(&dash)?,
            )?;
        }
        Command::Boundary {
            k,
            depth,
            quantity,
            s,
            p,
            nmax,
            iters,
        } => {
            let desc = GroupDescriptor::Free { rank: *k };
            desc.validate()?;
            if *k < 2 {
                anyhow::bail!(walklab::Error::InvalidParameter(
                    "boundary needs free rank k >= 2".into()
                ));
            }
            let mu = SparseMeasure::srw(desc)?;
            let caps = ConvolutionCaps::default();
            let value = match quantity.as_str() {
                "xi" => {
                    let word = match walklab::groups::parse_free_word(*k, s)? {
                        walklab::groups::GroupElement::Free(w) => w,
                        _ => unreachable!(),
                    };
                    let xi = boundary::harish_chandra_xi(*k, &word, *depth)?;
                    serde_json::json!({
                        "s": s, "xi": xi.value(),
                        "half_exponent_coefficients": xi.coefficients.iter()
                            .map(|(e, c)| (e.to_string(), c.to_string()))
                            .collect::<BTreeMap<_,_>>(),
                    })
                }
                "furstenberg" => {
                    let h = boundary::furstenberg_entropy(&mu, *depth)?;
                    serde_json::json!({
                        "nats": h.nats,
                        "log_q_coefficient": h.log_q_coefficient.to_string(),
                        "q": 2 * k - 1,
                    })
                }
                "xi-limit" => {
                    serde_json::to_value(boundary::xi_entropy_limit(&mu, *nmax, &caps)?)?
                }
                "koopman" => {
                    let pairing = boundary::koopman_pairing(&mu, *p, *depth)?;
                    let norm = boundary::koopman_norm_lower(
                        &mu,
                        (*p / (*p - 1.0)).max(1.01),
                        *depth,
                        *iters,
                    )?;
                    serde_json::json!({
                        "pairing": pairing,
                        "minus_p_log_pairing": -*p * pairing.ln(),
                        "norm_lower_bound": norm.bound,
                        "norm_iterations": norm.per_iteration,
                    })
                }
                other => anyhow::bail!(walklab::Error::InvalidParameter(format!(
                    "unknown quantity {other:?}: use xi|furstenberg|xi-limit|koopman"
                ))),
            };
            emit_report(
                cli,
                serde_json::json!({
                    "command": "boundary", "k": k, "depth": depth,
                    "quantity": quantity, "s": s, "p": p, "nmax": nmax,
                }),
                value,
            )?;
        }
        Command::Dlvp {
            common,
            grid,
            emit: emit_path,
        } => {
            let (mu, _) = resolve_measure(common)?;
            let bundle = dlvp::build_bundle_log_length(&mu, *grid)?;
            let value = serde_json::to_value(&bundle)?;
            if let Some(path) = emit_path {
                std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
            }
            emit_report(
                cli,
                serde_json::json!({"command": "dlvp", "common": common, "grid": grid}),
                value,
            )?;
        }
        Command::Verify { suite, seed } => {
            let failures = run_verify(suite, *seed)?;
            if failures > 0 {
                eprintln!("{failures} verification check(s) failed");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report { input } => {
            let text = std::fs::read_to_string(input)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            emit_report(
                cli,
                serde_json::json!({
                    "command": "report",
                    "input": input.display().to_string(),
                }),
                value,
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn resolve_group(spec: &str) -> anyhow::Result<GroupDescriptor> {
    let desc: GroupDescriptor = if spec.trim_start().starts_with('{') {
        serde_json::from_str(spec)
            .map_err(|e| walklab::Error::InvalidParameter(format!("bad group spec: {e}")))?
    } else {
        let (family, param) = spec.split_once(':').ok_or_else(|| {
            walklab::Error::InvalidParameter(format!(
                "group spec {spec:?} should be family:param or JSON"
            ))
        })?;
        let n: u64 = param
            .parse()
            .map_err(|e| walklab::Error::InvalidParameter(format!("group spec {spec:?}: {e}")))?;
        match family {
            "free" => GroupDescriptor::Free { rank: n as u32 },
            "abelian" => GroupDescriptor::Abelian { rank: n as u32 },
            "cyclic" => GroupDescriptor::Cyclic { order: n },
            "lamplighter" => GroupDescriptor::Lamplighter { rank: n as u32 },
            other => anyhow::bail!(walklab::Error::InvalidParameter(format!(
                "unknown family {other:?}"
            ))),
        }
    };
    desc.validate()?;
    Ok(desc)
}

fn resolve_measure(common: &CommonOpts) -> anyhow::Result<(SparseMeasure, ConvolutionCaps)> {
    let desc = resolve_group(&common.group)?;
    let caps = ConvolutionCaps {
        support: common.support_cap,
        ..ConvolutionCaps::default()
    };
    let spec = common.measure.trim();
    let mu = if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path)?;
        SparseMeasure::from_json(&serde_json::from_str(&text)?)?
    } else if spec.starts_with('{') {
        SparseMeasure::from_json(&serde_json::from_str(spec)?)?
    } else if let Some(rest) = spec.strip_prefix("preset:") {
        match rest.split_once(':') {
            Some(("lazy-srw", param)) => {
                let hold = param
                    .strip_prefix("hold=")
                    .and_then(|h| h.parse::<f64>().ok())
                    .ok_or_else(|| {
                        walklab::Error::InvalidParameter(format!(
                            "lazy-srw needs hold=<p>, got {param:?}"
                        ))
                    })?;
                SparseMeasure::lazy_srw(desc, hold)?
            }
            None if rest == "srw" => SparseMeasure::srw(desc)?,
            None if rest == "lazy-srw" => SparseMeasure::lazy_srw(desc, 0.5)?,
            _ => anyhow::bail!(walklab::Error::InvalidParameter(format!(
                "unknown preset {rest:?}"
            ))),
        }
    } else {
        anyhow::bail!(walklab::Error::InvalidParameter(format!(
            "measure spec {spec:?} should be preset:..., @file.json or JSON"
        )));
    };
    Ok((mu, caps))
}

fn emit_report(
    cli: &Cli,
    config: serde_json::Value,
    report: serde_json::Value,
) -> anyhow::Result<()> {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let payload = serde_json::json!({
        "meta": {
            "tool": "walklab",
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp": timestamp,
        },
        "config": config,
        "report": report,
    });
    let text = serde_json::to_string_pretty(&payload)?;
    match &cli.out {
        Some(path) => std::fs::write(path, text.as_bytes())?,
        None => println!("{text}"),
    }
    if let Some(dir) = &cli.csv_dir {
        std::fs::create_dir_all(dir)?;
        let mut count = 0usize;
        write_sequences_csv(&payload["report"], dir, "sequence", &mut count)?;
    }
    Ok(())
}

// Walk the report JSON and dump anything shaped like a sequence
// ({index_kind, terms: [{index, value}]}) as `index,value` CSV.
fn write_sequences_csv(
    value: &serde_json::Value,
    dir: &std::path::Path,
    name: &str,
    count: &mut usize,
) -> anyhow::Result<()> {
    if let Some(obj) = value.as_object() {
        if let Some(terms) = obj.get("terms").and_then(|t| t.as_array()) {
            if obj.contains_key("index_kind") {
                let path = dir.join(format!("{name}.csv"));
                let mut f = std::fs::File::create(path)?;
                writeln!(f, "index,value")?;
                for t in terms {
                    writeln!(
                        f,
                        "{},{}",
                        t.get("index").and_then(|v| v.as_f64()).unwrap_or(f64::NAN),
                        t.get("value").and_then(|v| v.as_f64()).unwrap_or(f64::NAN)
                    )?;
                }
                *count += 1;
                return Ok(());
            }
        }
        for (key, sub) in obj {
            let child = if name.is_empty() {
                key.clone()
            } else {
                format!("{name}.{key}")
            };
            write_sequences_csv(sub, dir, &child, count)?;
        }
    }
    Ok(())
}

struct Check {
    name: &'static str,
    run: fn(u64) -> walklab::Result<()>,
}

fn run_verify(suite: &str, seed: u64) -> anyhow::Result<usize> {
    let checks: Vec<Check> = vec![
        Check { name: "groups-axioms", run: verify_groups_axioms },
        Check { name: "groups-spheres", run: verify_groups_spheres },
        Check { name: "measures-convolution", run: verify_measures_convolution },
        Check { name: "measures-subadditivity", run: verify_measures_subadditivity },
        Check { name: "weights-interpolation", run: verify_weights_interpolation },
        Check { name: "weights-inverse-series", run: verify_weights_inverse_series },
        Check { name: "spectra-kesten", run: verify_spectra_kesten },
        Check { name: "spectra-sandwich", run: verify_spectra_sandwich },
        Check { name: "estimators-avez", run: verify_estimators_avez },
        Check { name: "estimators-lyapunov", run: verify_estimators_lyapunov },
        Check { name: "estimators-weighted", run: verify_estimators_weighted },
        Check { name: "estimators-conv-entropy", run: verify_estimators_conv },
        Check { name: "boundary-exact", run: verify_boundary_exact },
        Check { name: "boundary-koopman", run: verify_boundary_koopman },
        Check { name: "dlvp-bundle", run: verify_dlvp },
        Check { name: "inequalities", run: verify_inequalities },
    ];
    let mut failures = 0usize;
    let mut matched = 0usize;
    for check in &checks {
        if suite != "all" && !check.name.starts_with(suite) {
            continue;
        }
        matched += 1;
        let start = std::time::Instant::now();
        match (check.run)(seed) {
            Ok(()) => println!("ok   {} ({:.2?})", check.name, start.elapsed()),
            Err(e) => {
                println!("FAIL {}: {e}", check.name);
                failures += 1;
            }
        }
    }
    if matched == 0 {
        anyhow::bail!(walklab::Error::InvalidParameter(format!(
            "no verification suite matches {suite:?}"
        )));
    }
    Ok(failures)
}

fn ensure(cond: bool, msg: &str) -> walklab::Result<()> {
    if cond {
        Ok(())
    } else {
        Err(walklab::Error::Domain(format!("check failed: {msg}")))
    }
}

fn caps() -> ConvolutionCaps {
    ConvolutionCaps::default()
}

fn f2() -> GroupDescriptor {
    GroupDescriptor::Free { rank: 2 }
}

fn f2srw() -> SparseMeasure {
    SparseMeasure::srw(f2()).expect("srw")
}

fn verify_groups_axioms(seed: u64) -> walklab::Result<()> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for desc in [
        f2(),
        GroupDescriptor::Abelian { rank: 2 },
        GroupDescriptor::Cyclic { order: 6 },
        GroupDescriptor::Lamplighter { rank: 1 },
    ] {
        let e = desc.identity();
        for _ in 0..250 {
            let a = walklab::groups::random_element(&desc, &mut rng, 5);
            let b = walklab::groups::random_element(&desc, &mut rng, 5);
            let c = walklab::groups::random_element(&desc, &mut rng, 5);
            let left = desc.multiply(&desc.multiply(&a, &b)?, &c)?;
            let right = desc.multiply(&a, &desc.multiply(&b, &c)?)?;
            ensure(left == right, "associativity")?;
            ensure(desc.multiply(&a, &desc.inverse(&a)?)? == e, "inverse")?;
            let la = desc.length(&a)?;
            let lb = desc.length(&b)?;
            ensure(
                desc.length(&desc.multiply(&a, &b)?)? <= la + lb,
                "length subadditivity",
            )?;
            ensure(desc.length(&desc.inverse(&a)?)? == la, "length symmetry")?;
        }
    }
    Ok(())
}

fn verify_groups_spheres(_seed: u64) -> walklab::Result<()> {
    let d = f2();
    ensure(d.ball_size(2, 1_000_000)? == 17, "F_2 ball(2) = 17")?;
    for r in 1..=6u64 {
        let predicted = d.sphere_size(r, usize::MAX)?;
        let listed = d.sphere(r, 1_000_000)?.len() as u64;
        ensure(predicted == listed, "free sphere closed form")?;
        ensure(predicted == 4 * 3u64.pow(r as u32 - 1), "2k(2k-1)^{r-1}")?;
    }
    ensure(
        GroupDescriptor::Abelian { rank: 1 }.ball_size(3, 100)? == 7,
        "Z ball(3) = 7",
    )?;
    Ok(())
}

fn verify_measures_convolution(_seed: u64) -> walklab::Result<()> {
    use walklab::measures::PowerPolicy;
    let z = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 1 })?;
    let z4 = z.convolution_power(4, PowerPolicy::Sparse, &caps())?;
    let origin = GroupDescriptor::Abelian { rank: 1 }.identity();
    ensure(
        (z4.mass(&origin) - 0.375).abs() < 1e-14,
        "binomial C(4,2)/16",
    )?;
    let mu = f2srw();
    let mu2 = mu.convolve(&mu, &caps())?;
    ensure(
        (mu2.mass(&f2().identity()) - 0.25).abs() < 1e-14,
        "F_2 return 1/4",
    )?;
    ensure((mu2.total_mass() - 1.0).abs() < 1e-12, "mass conservation")?;
    for n in 1..=5 {
        let a = mu.convolution_power(n, PowerPolicy::Sparse, &caps())?;
        let b = mu.convolution_power(n, PowerPolicy::Radial, &caps())?;
        for (e, m) in a.atoms() {
            ensure((b.mass(e) - m).abs() <= 1e-12, "radial/sparse agreement")?;
        }
    }
    Ok(())
}

fn verify_measures_subadditivity(_seed: u64) -> walklab::Result<()> {
    let mu = f2srw();
    let mut hs = vec![0.0];
    let mut acc = SparseMeasure::dirac(f2());
    for _ in 0..8 {
        acc = acc.convolve(&mu, &caps())?;
        hs.push(acc.shannon_entropy());
    }
    for m in 1..hs.len() {
        for n in 1..hs.len() {
            if m + n < hs.len() {
                ensure(hs[m + n] <= hs[m] + hs[n] + 1e-9, "H subadditive")?;
            }
        }
    }
    Ok(())
}

fn verify_weights_interpolation(seed: u64) -> walklab::Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = Weight::polynomial(2.0)?;
    for _ in 0..40 {
        let mut atoms = Vec::new();
        for _ in 0..rng.gen_range(2..15) {
            atoms.push((
                walklab::groups::random_element(&f2(), &mut rng, 3),
                rng.gen_range(0.01..1.0),
            ));
        }
        let f = SparseMeasure::normalized(f2(), atoms)?;
        let p0 = rng.gen_range(2.0..6.0);
        let p1 = p0 + rng.gen_range(0.5..6.0);
        let (q0, q1) = (p0 / (p0 - 1.0), p1 / (p1 - 1.0));
        let theta = p0 / p1;
        let lhs = walklab::weights::weighted_lq_norm(&f, q1, &w, p1)?;
        let rhs = walklab::weights::weighted_lq_norm(&f, q0, &w, p0)?.powf(theta);
        ensure(lhs <= rhs + 1e-10, "lq interpolation inequality")?;
        let mut prev = f64::NEG_INFINITY;
        for &p in &[2.0, 4.0, 8.0, 16.0] {
            let q = p / (p - 1.0);
            let v = -p * walklab::weights::ln_weighted_lq_norm_sparse(&f, q, &w, p)?;
            ensure(v >= prev - 1e-9, "-p log norm monotone")?;
            prev = v;
        }
    }
    Ok(())
}

fn verify_weights_inverse_series(_seed: u64) -> walklab::Result<()> {
    let zdesc = GroupDescriptor::Abelian { rank: 1 };
    let z = SparseMeasure::srw(zdesc)?;
    let w = Weight::inverse_series(&z, 3, 3.0, &caps())?;
    let at0 = w.eval(&zdesc, &zdesc.identity())?;
    ensure((at0 - 16.0).abs() < 1e-9, "omega-bar(0) = 16 at N=3")?;
    for (mu, n) in [(z.clone(), 8u32), (f2srw(), 6u32)] {
        let rep = walklab::weights::verify_convolution_domination(&mu, n, &caps())?;
        ensure(rep.max_ratio <= 9.62, "domination ratio <= 9.62")?;
    }
    Ok(())
}

fn verify_spectra_kesten(_seed: u64) -> walklab::Result<()> {
    let est = spectra::radius_pf2_symmetric(&f2srw(), 300, &caps())?;
    ensure((est.value - 0.8660).abs() < 0.01, "F_2 Kesten radius")?;
    let z = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 1 })?;
    ensure(
        spectra::radius_pf2_symmetric(&z, 500, &caps())?.value >= 0.996,
        "Z radius trending to 1",
    )?;
    let c6 = SparseMeasure::srw(GroupDescriptor::Cyclic { order: 6 })?;
    ensure(
        spectra::radius_pf2_symmetric(&c6, 300, &caps())?.value >= 0.99,
        "Cyclic(6) radius near 1",
    )?;
    Ok(())
}

fn verify_spectra_sandwich(_seed: u64) -> walklab::Result<()> {
    let mu = f2srw();
    let lower = spectra::radius_pfq_lower(&mu, 2.0, 300, &caps())?;
    let upper = spectra::radius_pfq_upper_rd(&mu, 2.0, 2.0, 300, &caps())?;
    ensure(lower.value <= upper.value + 0.02, "sandwich order")?;
    let (u, p) = (2.0, 4.0);
    let lower_u = spectra::radius_pfq_lower(&mu, u / (u - 1.0), 300, &caps())?;
    let upper_p = spectra::radius_pfq_upper_rd(&mu, p / (p - 1.0), 2.0, 300, &caps())?;
    ensure(
        lower_u.value <= upper_p.value.powf(u / p) + 0.02,
        "PF interpolation on certified bounds",
    )?;
    Ok(())
}

fn verify_estimators_avez(_seed: u64) -> walklab::Result<()> {
    let rep = estimators::avez_entropy(&f2srw(), 200, None, &caps())?;
    let h = 0.5 * 3f64.ln();
    ensure(
        (rep.estimate - h).abs() < 0.01 * h,
        "F_2 entropy near half log 3",
    )?;
    let z = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 1 })?;
    ensure(
        estimators::avez_entropy(&z, 200, None, &caps())?.estimate <= 0.02,
        "Z entropy vanishes",
    )?;
    Ok(())
}

fn verify_estimators_lyapunov(_seed: u64) -> walklab::Result<()> {
    let exact =
        estimators::lyapunov_via_radius(&f2srw(), &Weight::one(), &[2.0, 4.0, 8.0], 40, &caps())?;
    ensure(exact.estimate.abs() < 1e-10, "trivial weight gives zero")?;
    let w = Weight::exponential(std::f64::consts::E)?;
    let direct = estimators::lyapunov_direct(&f2srw(), &w, 600, &caps())?;
    let via = estimators::lyapunov_via_radius(
        &f2srw(),
        &w,
        &estimators::DEFAULT_P_GRID,
        600,
        &caps(),
    )?;
    ensure(
        (direct.estimate - via.estimate).abs() <= 0.02,
        "route agreement on F_2",
    )?;
    let poly = Weight::polynomial(1.0)?;
    let vanish = estimators::lyapunov_direct(&f2srw(), &poly, 500, &caps())?;
    ensure(
        vanish.sequence.last_value().unwrap_or(1.0) <= 0.02,
        "log-length Lyapunov vanishes",
    )?;
    Ok(())
}

fn verify_estimators_weighted(seed: u64) -> walklab::Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let grid: Vec<f64> = vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0];
    for _ in 0..20 {
        let mut atoms = Vec::new();
        for _ in 0..rng.gen_range(2..12) {
            atoms.push((
                walklab::groups::random_element(&f2(), &mut rng, 3),
                rng.gen_range(0.05..1.0),
            ));
        }
        let mu = SparseMeasure::normalized(f2(), atoms)?;
        let w = Weight::polynomial(rng.gen_range(1.0..3.0))?;
        let rep = estimators::weighted_shannon_limit(&mu, &w, &grid)?;
        let closed = rep.params["closed_form"].as_f64().unwrap_or(f64::NAN);
        ensure(
            (rep.estimate - closed).abs() <= 1e-3,
            "Renyi limit matches closed form",
        )?;
        let hw = estimators::weighted_avez_entropy(&mu, &w, 6, &caps())?;
        let residual = hw.params["max_identity_residual"].as_f64().unwrap_or(1.0);
        ensure(residual <= 1e-9, "per-n weighted identity")?;
    }
    Ok(())
}

fn verify_estimators_conv(_seed: u64) -> walklab::Result<()> {
    let rep = estimators::convolution_entropy(
        &f2srw(),
        &estimators::DEFAULT_P_GRID,
        400,
        2.0,
        &caps(),
    )?;
    let h = 0.5 * 3f64.ln();
    ensure((rep.estimate - h).abs() <= 0.1 * h, "c matches h on F_2")?;
    ensure(
        rep.notes.iter().all(|n| !n.starts_with("FLAG")),
        "per-p monotone",
    )?;
    Ok(())
}

fn verify_boundary_exact(seed: u64) -> walklab::Result<()> {
    use num_traits::{One, Zero};
    use rand::{Rng, SeedableRng};
    let mu = f2srw();
    for depth in 1..=3 {
        ensure(
            boundary::stationarity_defect(&mu, 2, depth)?.is_zero(),
            "stationarity exact",
        )?;
    }
    let desc = f2();
    for r in 0..=2u64 {
        for e in desc.sphere(r, 1000)? {
            let w = match e {
                walklab::groups::GroupElement::Free(w) => w,
                _ => unreachable!(),
            };
            ensure(
                boundary::rn_derivative(2, &w, 3)?.integral().is_one(),
                "rho integral one",
            )?;
        }
    }
    let h = boundary::furstenberg_entropy(&mu, 2)?;
    ensure(
        h.log_q_coefficient.to_string() == "1/2",
        "Furstenberg = (1/2) log q exactly",
    )?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xb0);
    for _ in 0..25 {
        let ls = rng.gen_range(0..3);
        let lt = rng.gen_range(0..3);
        let s = walklab::groups::random_element(&desc, &mut rng, ls);
        let t = walklab::groups::random_element(&desc, &mut rng, lt);
        let (sw, tw) = match (&s, &t) {
            (walklab::groups::GroupElement::Free(a), walklab::groups::GroupElement::Free(b)) => {
                (a.clone(), b.clone())
            }
            _ => unreachable!(),
        };
        let st = walklab::groups::concat_reduce(&sw, &tw);
        let depth = sw.len() + tw.len() + 1;
        let rho_st = boundary::rn_derivative(2, &st, depth)?;
        let rho_t = boundary::rn_derivative(2, &tw, depth)?;
        for w in boundary::cylinders(2, depth, 100_000)? {
            let tw_word = walklab::groups::concat_reduce(&tw, &w);
            let rho_s_at = boundary::rn_derivative(2, &sw, tw_word.len())?;
            let lhs = rho_st.exponent(&w).expect("cylinder");
            let rhs = rho_s_at.exponent(&tw_word).expect("cylinder")
                + rho_t.exponent(&w).expect("cylinder");
            ensure(lhs == rhs, "cocycle identity exact")?;
        }
    }
    Ok(())
}

fn verify_boundary_koopman(_seed: u64) -> walklab::Result<()> {
    let mu = f2srw();
    let mut seq = walklab::seq::AsymptoticSequence::new(walklab::seq::IndexKind::ExponentP);
    let mut prev = f64::NEG_INFINITY;
    for &p in &[2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
        let v = boundary::koopman_pairing(&mu, p, 1)?;
        let val = -p * v.ln();
        ensure(val >= prev - 1e-12, "pairing monotone in p")?;
        prev = val;
        seq.push(p, val);
    }
    let fit = seq.fit_linear_in_inverse_index().expect("fit");
    ensure(
        (fit.c0 - 0.5 * 3f64.ln()).abs() <= 1e-3,
        "pairing extrapolates to half log 3",
    )?;
    let rep = boundary::xi_entropy_limit(&mu, 300, &caps())?;
    ensure(
        (rep.estimate - 0.5 * 3f64.ln()).abs() <= 0.02 * 0.5 * 3f64.ln(),
        "xi entropy limit near h",
    )?;
    Ok(())
}

fn verify_dlvp(seed: u64) -> walklab::Result<()> {
    use rand::SeedableRng;
    let mu = f2srw();
    let bundle = dlvp::build_bundle_log_length(&mu, 64)?;
    ensure(bundle.m_const >= 1.0, "M >= 1")?;
    let mut worst = f64::NEG_INFINITY;
    for y in 0..=50 {
        for yp in 0..=50 {
            let v = bundle.f_compressed((y + yp) as f64)?
                - bundle.f_compressed(y as f64)?
                - bundle.f_compressed(yp as f64)?;
            worst = worst.max(v);
        }
    }
    ensure(worst <= bundle.m_const + 1e-12, "F weak subadditivity")?;
    let desc = f2();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xd1);
    for _ in 0..1000 {
        let s = walklab::groups::random_element(&desc, &mut rng, 4);
        let t = walklab::groups::random_element(&desc, &mut rng, 4);
        let st = desc.multiply(&s, &t)?;
        let th = |x: &walklab::groups::GroupElement| -> walklab::Result<f64> {
            bundle.theta_of_length(desc.length(x)?)
        };
        ensure(th(&st)? <= th(&s)? + th(&t)? + 1e-12, "Theta subadditive")?;
    }
    Ok(())
}

fn verify_inequalities(_seed: u64) -> walklab::Result<()> {
    let named = vec![("poly:d=1".to_string(), Weight::polynomial(1.0)?)];
    let dash = estimators::fundamental_inequality_report(&f2srw(), &named, 300, &caps())?;
    ensure(dash.slack >= -0.02, "h <= v_S * speed")?;
    ensure(dash.slack.abs() < 0.02, "F_2 SRW saturates the inequality")?;
    let z = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 1 })?;
    let dash_z = estimators::fundamental_inequality_report(&z, &[], 300, &caps())?;
    ensure(
        dash_z.h_estimate <= 0.02 && dash_z.product.abs() <= 0.02,
        "Z: both sides vanish",
    )?;
    Ok(())
}
