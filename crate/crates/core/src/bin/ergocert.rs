use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ergocert_core::certificates::{self, ConditionId, IndexMethod};
use ergocert_core::io::{self, ChainFile, KernelFile, SetFile, ValuesFile};
use ergocert_core::pipeline::{self, CertifyParams, Config, FileInputs, Inputs};
use ergocert_core::scenario::{self, Scenario};
use ergocert_core::{convergence, harnack, semigroup, solver, Semigroup, StateFn};

#[derive(Parser)]
#[command(name = "ergocert", version, about = "Invariant-measure certificates for finite Markov chains")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a scenario and write its chain and companions to a directory.
    Gen {
        /// Scenario JSON, inline or as a file path.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check one condition.
    Certify {
        #[arg(long)]
        condition: String,
        #[command(flatten)]
        files: Files,
        /// JSON object of condition parameters, inline or as a file path.
        #[arg(long)]
        params: Option<String>,
        /// Single numeric parameter, `key=value`; repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        param: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Invariant probabilities, or the Cesaro-adjoint density with respect to m.
    Invariant {
        #[arg(long, value_enum, default_value = "auto")]
        method: Method,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        measure: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vanishing-mass index profile of m.
    IndexProfile {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value_t = 256)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV series eps,crisp,fractional.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Scaled resolvent alpha R_alpha, and mu alpha R_alpha when a measure is given.
    Resolvent {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        measure: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sharp Harnack constant between two rows.
    Harnack {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// rho P + (1 - rho) Q, with Q the identity when omitted.
    Perturb {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        rho: PathBuf,
        #[arg(long)]
        q: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weighted gap norms of P^n and their geometric fit.
    Convergence {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        lyapunov: Option<PathBuf>,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV series n,beta_n.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a JSON config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for the CSV plot series.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Eigen,
    Cesaro,
    Auto,
}

#[derive(clap::Args)]
struct Files {
    /// An inputs file as written by `gen`; the flags below override its entries.
    #[arg(long, required_unless_present = "kernel")]
    inputs: Option<PathBuf>,
    /// Kernel or generator file.
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long)]
    measure: Option<PathBuf>,
    #[arg(long)]
    lyapunov: Option<PathBuf>,
    #[arg(long)]
    set: Option<PathBuf>,
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long)]
    rho: Option<PathBuf>,
    #[arg(long)]
    q: Option<PathBuf>,
}

impl Files {
    fn load(&self) -> Result<Inputs> {
        let mut fi = FileInputs::default();
        if let Some(p) = &self.inputs {
            fi = io::read_json(p).with_context(|| format!("reading {}", p.display()))?;
            // make the file's own paths relative to the working directory
            let dir = p.parent().unwrap_or(Path::new(""));
            let fix = |q: &mut Option<PathBuf>| {
                if let Some(q) = q {
                    *q = dir.join(&*q);
                }
            };
            fi.chain = dir.join(&fi.chain);
            for q in [&mut fi.measure, &mut fi.lyapunov, &mut fi.set, &mut fi.b, &mut fi.rho, &mut fi.q] {
                fix(q);
            }
        }
        let over = |slot: &mut Option<PathBuf>, flag: &Option<PathBuf>| {
            if flag.is_some() {
                *slot = flag.clone();
            }
        };
        if let Some(k) = &self.kernel {
            fi.chain = k.clone();
        }
        over(&mut fi.measure, &self.measure);
        over(&mut fi.lyapunov, &self.lyapunov);
        over(&mut fi.set, &self.set);
        over(&mut fi.b, &self.b);
        over(&mut fi.rho, &self.rho);
        over(&mut fi.q, &self.q);
        Ok(fi.load(Path::new(""))?)
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            let r = serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::from).and_then(|_| writeln!(out));
            // a closed pipe (`| head`) is not an error
            match r {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn inline_or_file(s: &str) -> Result<String> {
    if s.trim_start().starts_with('{') {
        Ok(s.to_string())
    } else {
        fs::read_to_string(s).with_context(|| format!("reading {s}"))
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ERGOCERT_THREADS") {
        let n: usize = v.parse().with_context(|| format!("ERGOCERT_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

/// Writes the bundle next to an `inputs.json` that `pipeline` can load.
fn write_bundle(b: &scenario::Bundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut fi = FileInputs { chain: "chain.json".into(), ..Default::default() };
    io::write_json(dir.join("chain.json"), &ChainFile::from_semigroup(&b.chain))?;
    io::write_json(dir.join("measure.json"), &ValuesFile::from_measure(&b.m))?;
    fi.measure = Some("measure.json".into());
    for (name, m) in &b.measures {
        io::write_json(dir.join(format!("measure_{name}.json")), &ValuesFile::from_measure(m))?;
    }
    let fns = [("lyapunov", &b.v), ("b", &b.b_fn), ("rho", &b.rho)];
    for (name, f) in fns {
        if let Some(f) = f {
            io::write_json(dir.join(format!("{name}.json")), &ValuesFile::from_statefn(f))?;
            let path = Some(PathBuf::from(format!("{name}.json")));
            match name {
                "lyapunov" => fi.lyapunov = path,
                "b" => fi.b = path,
                _ => fi.rho = path,
            }
        }
    }
    if let Some(s) = &b.set {
        io::write_json(dir.join("set.json"), &SetFile::from_set(s))?;
        fi.set = Some("set.json".into());
    }
    fi.constants = b.constants.clone();
    io::write_json(dir.join("inputs.json"), &fi)?;
    io::write_json(dir.join("scenario.json"), &b.scenario)?;
    Ok(())
}

/// Exit status 2 when a requested certificate fails.
fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Gen { scenario, seed, out } => {
            let mut s: Scenario = serde_json::from_str(&inline_or_file(&scenario)?).context("parsing scenario")?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let b = scenario::generate(&s)?;
            write_bundle(&b, &out)?;
            Ok(0)
        }
        Cmd::Certify { condition, files, params, param, out } => {
            let id = ConditionId::parse(&condition).with_context(|| {
                let known: Vec<_> = ConditionId::ALL.iter().map(|c| c.as_str()).collect();
                format!("unknown condition {condition:?}; known: {}", known.join(", "))
            })?;
            let inputs = files.load()?;
            let mut obj = match params {
                Some(p) => serde_json::from_str::<serde_json::Value>(&inline_or_file(&p)?).context("parsing params")?,
                None => json!({}),
            };
            for kv in &param {
                let (key, val) = kv.split_once('=').with_context(|| format!("--param {kv:?} is not KEY=VALUE"))?;
                let val: serde_json::Value = serde_json::from_str(val).unwrap_or_else(|_| json!(val));
                obj[key] = val;
            }
            let prm: CertifyParams = serde_json::from_value(obj).context("invalid params")?;
            let cert = pipeline::certify(id, &inputs, &prm)?;
            emit(&cert.to_json(), out.as_deref())?;
            Ok(if cert.fails() { 2 } else { 0 })
        }
        Cmd::Invariant { method, kernel, measure, out } => {
            let chain = io::load_chain(&kernel)?;
            let m = measure.map(|p| io::load_measure(p, chain.space())).transpose()?;
            let results = match (&chain, method) {
                (Semigroup::Continuous(_), _) => solver::solve_continuous(&chain)?,
                (Semigroup::Discrete(p), Method::Eigen) => solver::solve_eigen(p)?,
                (Semigroup::Discrete(p), Method::Cesaro) => {
                    let m = m.context("--method cesaro needs --measure")?;
                    vec![solver::solve_cesaro_adjoint(p, &m, 1e-12, 1 << 16)?]
                }
                (Semigroup::Discrete(p), Method::Auto) => match &m {
                    Some(m) => vec![solver::solve_cesaro_adjoint(p, m, 1e-12, 1 << 16)?],
                    None => solver::solve_eigen(p)?,
                },
            };
            let v: Vec<_> = results.iter().map(|r| r.to_json()).collect();
            emit(&json!({ "states": chain.space().labels(), "results": v }), out.as_deref())?;
            Ok(0)
        }
        Cmd::IndexProfile { kernel, measure, horizon, out, csv } => {
            let chain = io::load_chain(&kernel)?;
            let m = io::load_measure(measure, chain.space())?;
            let prof = certificates::index_profile(&chain, &m, &certificates::default_eps_grid(&m)?, horizon, IndexMethod::Both)?;
            let rep = pipeline::Report { index_profiles: vec![prof.clone()], ..Default::default() };
            if let Some(c) = csv {
                fs::write(c, &rep.csv_series()[0].1)?;
            }
            emit(&json!({ "profile": prof, "certificate": prof.certificate() }), out.as_deref())?;
            Ok(0)
        }
        Cmd::Resolvent { kernel, alpha, measure, out } => {
            let chain = io::load_chain(&kernel)?;
            let r = chain.resolvent(alpha)?;
            let mut v = json!({ "states": chain.space().labels(), "alpha": alpha, "scaled": r.scaled.matrix().to_rows() });
            if let Some(p) = measure {
                let mu = io::load_measure(p, chain.space())?;
                let m = semigroup::auxiliary_measure(&chain, &mu, alpha, false)?;
                v["auxiliary_measure"] = json!(m.weights());
            }
            emit(&v, out.as_deref())?;
            Ok(0)
        }
        Cmd::Harnack { kernel, x, y, p, out } => {
            let k = io::load_kernel(&kernel)?;
            let (xi, yi) = (k.space().resolve(&x)?, k.space().resolve(&y)?);
            let h = harnack::harnack_constant(&k, xi, yi, p)?;
            let f = harnack::harnack_maximizer(&k, xi, yi, p)?;
            let m = if h.value.is_finite() { json!(h.value) } else { json!("inf") };
            emit(&json!({ "x": x, "y": y, "p": p, "M": m, "maximizer": f.values() }), out.as_deref())?;
            Ok(0)
        }
        Cmd::Perturb { kernel, rho, q, out } => {
            let k = io::load_kernel(&kernel)?;
            let rho = io::load_statefn(rho, k.space())?;
            let q = q.map(io::load_kernel).transpose()?;
            let pk = harnack::perturb_with(&k, &rho, q.as_ref())?;
            emit(&serde_json::to_value(KernelFile::from_kernel(&pk))?, out.as_deref())?;
            Ok(0)
        }
        Cmd::Convergence { kernel, lyapunov, measure, out, csv } => {
            let k = io::load_kernel(&kernel)?;
            let m = io::load_measure(measure, k.space())?;
            let v = match lyapunov {
                Some(p) => io::load_statefn(p, k.space())?,
                None => StateFn::constant(k.space(), 0.0),
            };
            let rep = convergence::decay_report(&k, &m, &v, &convergence::default_n_grid())?;
            if let Some(c) = csv {
                fs::write(c, rep.to_csv())?;
            }
            emit(&serde_json::to_value(&rep)?, out.as_deref())?;
            Ok(0)
        }
        Cmd::Pipeline { config, out, csv_dir } => {
            let cfg: Config = io::read_json(&config).with_context(|| format!("reading {}", config.display()))?;
            let base = config.parent().unwrap_or(Path::new("")).to_path_buf();
            let rep = pipeline::run_config(&cfg, &base)?;
            if let Some(dir) = csv_dir {
                fs::create_dir_all(&dir)?;
                for (name, body) in rep.csv_series() {
                    fs::write(dir.join(name), body)?;
                }
            }
            emit(&rep.to_json(), out.as_deref())?;
            if !rep.errors.is_empty() && rep.certificates.is_empty() && rep.invariants_found.is_empty() {
                bail!("every stage failed: {}", rep.errors[0].message);
            }
            Ok(if rep.any_failed() { 2 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
