use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mollow_core::experiments::{
    self, Execution, Format, RunOptions, SweepResult, SweepSpec, TraceSpec,
};
use mollow_core::model::{angular_to_mhz, ConfigFile, DecayModel, Envelope, ModelTag, TimeTrace};
use mollow_core::modes::ModeSpectrum;
use mollow_core::{spectral, Convention, Error};

#[derive(Parser, Debug)]
#[command(
    name = "mollow",
    version,
    about = "Floquet and RWA spectra of a concatenated continuously driven two-level system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one configuration and write its mode spectrum.
    Solve(SolveArgs),
    /// Write population traces of one configuration.
    Evolve(EvolveArgs),
    /// Run a sweep described by a JSON sweep document.
    Sweep(SweepArgs),
    /// Run a preset figure scenario.
    Scenario(ScenarioArgs),
    /// Fit damped cosines to a population trace CSV.
    Fit(FitArgs),
    /// Compare models at one configuration.
    Compare(CompareArgs),
    /// List preset scenarios.
    ListScenarios,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

impl FormatArg {
    fn ext(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Json => "json",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConventionArg {
    FirstZone,
    Smooth,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::FirstZone => Convention::FirstZone,
            ConventionArg::Smooth => Convention::Smooth,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DecayArg {
    None,
    Gauss,
    Exp,
}

impl DecayArg {
    fn envelope(self) -> Envelope {
        match self {
            DecayArg::None => Envelope::None,
            DecayArg::Gauss => Envelope::Gaussian,
            DecayArg::Exp => Envelope::Exponential,
        }
    }
}

/// Value of `--K`: `None` means converge per point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct KArg(Option<usize>);

#[derive(Clone, Debug, PartialEq, Eq)]
struct ModelList(Vec<ModelTag>);

fn parse_k(s: &str) -> std::result::Result<KArg, String> {
    if s == "auto" {
        return Ok(KArg(None));
    }
    s.parse::<usize>()
        .map(|k| KArg(Some(k)))
        .map_err(|_| format!("expected 'auto' or a non-negative integer, got '{s}'"))
}

fn parse_models(s: &str) -> std::result::Result<ModelList, String> {
    s.split(',')
        .map(|m| {
            let m = m.trim();
            ModelTag::parse(m).ok_or_else(|| {
                format!("unknown model '{m}' (expected floquet, rwa, rwa_floquet, effective, trotter)")
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(ModelList)
}

/// Output location and format.
#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory for machine-readable files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Output file format.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

/// Computation settings shared by the solving subcommands.
#[derive(Args, Debug)]
struct RunArgs {
    /// Comma-separated models: floquet, rwa, rwa_floquet, effective, trotter.
    #[arg(long, value_parser = parse_models)]
    models: Option<ModelList>,
    /// Quasienergy labelling convention.
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    /// Highest harmonic kept in mode spectra.
    #[arg(long)]
    nmax: Option<u32>,
    /// Floquet truncation order: 'auto' or an integer.
    #[arg(long = "K", value_parser = parse_k)]
    k: Option<KArg>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Decay envelope applied to reconstructed traces.
    #[arg(long, value_enum)]
    decay: Option<DecayArg>,
    /// Decay time in us for --decay gauss|exp.
    #[arg(long)]
    tau: Option<f64>,
    /// Trace length in us.
    #[arg(long)]
    t_max: Option<f64>,
    /// Trace sampling interval in us.
    #[arg(long)]
    dt: Option<f64>,
}

impl RunArgs {
    fn apply(&self, run: &mut RunOptions) -> Result<()> {
        if let Some(m) = &self.models {
            run.models = m.0.clone();
        }
        if let Some(c) = self.convention {
            run.convention = c.into();
        }
        if let Some(n) = self.nmax {
            run.n_max = n;
        }
        if let Some(k) = self.k {
            run.k = k.0;
        }
        if let Some(t) = self.t_max {
            run.trace.t_max_us = t;
        }
        if let Some(dt) = self.dt {
            run.trace.dt_us = dt;
        }
        match (self.decay, self.tau) {
            (Some(DecayArg::None), _) => run.decay = None,
            (Some(d), Some(tau)) => run.decay = Some(DecayModel::uniform(d.envelope(), tau)?),
            (Some(_), None) => bail!("--decay gauss|exp requires --tau"),
            (None, Some(_)) => bail!("--tau requires --decay gauss|exp"),
            (None, None) => {}
        }
        Ok(())
    }

    fn execution(&self) -> Execution {
        match self.jobs {
            Some(1) => Execution::Sequential,
            jobs => Execution::Parallel { jobs },
        }
    }
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON configuration file (MHz units).
    #[arg(long)]
    config: PathBuf,
    /// Dotted override applied after loading, e.g. eps_mod_MHz=1.0.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ConfigFile> {
        let text = fs::read_to_string(&self.config)
            .with_context(|| format!("reading config {}", self.config.display()))?;
        let file = ConfigFile::from_json(&text)
            .with_context(|| format!("parsing config {}", self.config.display()))?;
        Ok(file.with_overrides(&self.overrides)?)
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct EvolveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Propagator step in us for the trotter model.
    #[arg(long)]
    trotter_step: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// JSON sweep document.
    #[arg(long)]
    spec: PathBuf,
    /// Dotted override applied to the base configuration.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario name (see list-scenarios).
    name: String,
    /// Write the scenario's sweep document instead of running it.
    #[arg(long)]
    spec_only: bool,
    /// Dotted override applied to the base configuration.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Trace CSV with columns t_us,value.
    #[arg(long)]
    trace: PathBuf,
    /// Number of cosine components.
    #[arg(long, default_value_t = 3)]
    components: usize,
    /// Decay envelope of the fit model.
    #[arg(long, value_enum, default_value = "none")]
    envelope: DecayArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Output directory for the JSON report.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(dir.join(name))
}

fn print_modes(spec: &ModeSpectrum, top: usize) {
    let mut e: Vec<_> = spec.entries.iter().filter(|e| e.amp > 1e-12).collect();
    e.sort_by(|a, b| b.amp.total_cmp(&a.amp).then((a.n, a.i).cmp(&(b.n, b.i))));
    println!("  {:>3} {:>3} {:>12} {:>12} {:>10}", "i", "n", "f (MHz)", "amp", "phase");
    for x in e.iter().take(top) {
        println!(
            "  {:>3} {:>3} {:>12.6} {:>12.6e} {:>10.4}",
            x.i,
            x.n,
            angular_to_mhz(x.omega),
            x.amp,
            x.phase
        );
    }
}

fn solve(a: &SolveArgs) -> Result<()> {
    let file = a.config.load()?;
    let (cfg, psi) = file.ingest()?;
    let mut run = RunOptions {
        models: vec![ModelTag::Floquet],
        ..RunOptions::default()
    };
    a.run.apply(&mut run)?;
    for &m in &run.models {
        let (sol, spec) = experiments::model_spectrum(m, &cfg, &psi, &run, None)
            .with_context(|| format!("solve ({m})"))?;
        println!("model {m}");
        if let Some(s) = &sol {
            println!(
                "  K = {}  lambda+ = {:.9} MHz  lambda- = {:.9} MHz{}",
                s.k,
                angular_to_mhz(s.lambda_plus()),
                angular_to_mhz(s.lambda_minus()),
                if s.degenerate { "  (degenerate)" } else { "" }
            );
        }
        println!("  delta_lambda = {:.9} MHz", angular_to_mhz(spec.delta_lambda));
        print_modes(&spec, 8);
        let name = format!("modes_{m}.{}", a.out.format.ext());
        let path = match a.out.format {
            FormatArg::Csv => {
                let mut w = create(&a.out.out, &name)?;
                spec.write_csv(&mut w)?;
                w.flush()?;
                a.out.out.join(&name)
            }
            FormatArg::Json => write_text(&a.out.out, &name, &serde_json::to_string_pretty(&spec)?)?,
        };
        println!("  wrote {}", path.display());
    }
    Ok(())
}

fn evolve(a: &EvolveArgs) -> Result<()> {
    let file = a.config.load()?;
    let (cfg, psi) = file.ingest()?;
    let mut run = RunOptions {
        models: vec![ModelTag::Floquet],
        ..RunOptions::default()
    };
    a.run.apply(&mut run)?;
    run.trace.trotter_step_us = a.trotter_step;
    for &m in &run.models {
        let t = experiments::model_trace(m, &cfg, &psi, &run).with_context(|| format!("evolve ({m})"))?;
        let d = experiments::TraceDigest::of(&t);
        let name = format!("trace_{m}.{}", a.out.format.ext());
        let path = match a.out.format {
            FormatArg::Csv => {
                let mut w = create(&a.out.out, &name)?;
                t.write_csv(&mut w)?;
                w.flush()?;
                a.out.out.join(&name)
            }
            FormatArg::Json => write_text(&a.out.out, &name, &serde_json::to_string_pretty(&t)?)?,
        };
        println!(
            "{m}: {} samples, dt = {} us, P0 in [{:.6}, {:.6}], mean {:.6}; wrote {}",
            d.len,
            d.dt,
            d.min,
            d.max,
            d.mean,
            path.display()
        );
    }
    Ok(())
}

fn write_sweep(result: &SweepResult, out: &OutArgs) -> Result<()> {
    let name = format!("{}.{}", result.name, out.format.ext());
    let mut w = create(&out.out, &name)?;
    experiments::export(result, out.format.into(), &mut w)?;
    w.flush()?;
    println!("wrote {}", out.out.join(&name).display());
    let bname = format!("{}_branches.csv", result.name);
    let mut w = create(&out.out, &bname)?;
    result.write_branches_csv(&mut w)?;
    w.flush()?;
    println!("wrote {}", out.out.join(&bname).display());
    if result.points.iter().any(|p| p.records.iter().any(|r| r.spectrum.is_some())) {
        let hname = format!("{}_heatmap.csv", result.name);
        let mut w = create(&out.out, &hname)?;
        result.write_heatmap_csv(&mut w)?;
        w.flush()?;
        println!("wrote {}", out.out.join(&hname).display());
    }
    Ok(())
}

fn summarize_sweep(result: &SweepResult) {
    let failed = result
        .points
        .iter()
        .flat_map(|p| p.records.iter().map(move |r| (p, r)))
        .filter(|(_, r)| r.error.is_some())
        .count();
    println!(
        "sweep {}: {} points over {}, models {}",
        result.name,
        result.points.len(),
        result.axis.label(),
        result
            .models
            .iter()
            .map(|m| m.as_str())
            .collect::<Vec<_>>()
            .join(",")
    );
    println!("  {:>12} {}", result.axis.label(), "delta_lambda (MHz) per model");
    for p in &result.points {
        let cols: Vec<String> = p
            .records
            .iter()
            .map(|r| match r.delta_lambda {
                Some(d) => format!("{:>12.6}", angular_to_mhz(d)),
                None => format!("{:>12}", "-"),
            })
            .collect();
        println!("  {:>12.6} {}", p.value, cols.join(" "));
    }
    if failed > 0 {
        println!("  {failed} model evaluations failed; see the error fields of the JSON export");
    }
}

fn run_spec(mut spec: SweepSpec, overrides: &[String], run: &RunArgs, out: &OutArgs) -> Result<()> {
    spec.base = spec.base.with_overrides(overrides)?;
    run.apply(&mut spec.run)?;
    let result = experiments::run_sweep(&spec, run.execution()).with_context(|| format!("sweep {}", spec.name))?;
    summarize_sweep(&result);
    write_sweep(&result, out)
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let text = fs::read_to_string(&a.spec).with_context(|| format!("reading sweep {}", a.spec.display()))?;
    let spec = SweepSpec::from_json(&text).with_context(|| format!("parsing sweep {}", a.spec.display()))?;
    run_spec(spec, &a.overrides, &a.run, &a.out)
}

fn scenario(a: &ScenarioArgs) -> Result<()> {
    let spec = experiments::scenario(&a.name)?;
    if a.spec_only {
        let mut spec = spec;
        spec.base = spec.base.with_overrides(&a.overrides)?;
        a.run.apply(&mut spec.run)?;
        spec.validate()?;
        let p = write_text(&a.out.out, &format!("{}.json", spec.name), &spec.to_json()?)?;
        println!("wrote {}", p.display());
        return Ok(());
    }
    println!("{}", spec.description);
    run_spec(spec, &a.overrides, &a.run, &a.out)
}

fn fit(a: &FitArgs) -> Result<()> {
    let f = File::open(&a.trace).with_context(|| format!("reading trace {}", a.trace.display()))?;
    let trace = TimeTrace::read_csv(BufReader::new(f))?;
    let r = spectral::fit_modes(&trace, a.components, a.envelope.envelope(), None).context("fit")?;
    println!(
        "fit of {} samples: a0 = {:.6}, rms residual {:.3e}, converged {}",
        trace.len(),
        r.a0,
        r.residual_rms,
        r.flags.converged
    );
    println!("  {:>12} {:>12} {:>10} {:>10}", "amp", "f (MHz)", "phase", "tau (us)");
    for c in &r.components {
        let tau = c.tau.map(|t| format!("{t:>10.4}")).unwrap_or_else(|| format!("{:>10}", "-"));
        println!(
            "  {:>12.6} {:>12.6} {:>10.4} {tau}",
            c.amp,
            angular_to_mhz(c.omega),
            c.phase
        );
    }
    if r.flags.degenerate_frequencies {
        println!("  warning: fitted frequencies closer than the FFT resolution");
    }
    let name = format!("fit.{}", a.out.format.ext());
    let path = match a.out.format {
        FormatArg::Csv => {
            let mut w = create(&a.out.out, &name)?;
            r.write_csv(&mut w)?;
            w.flush()?;
            a.out.out.join(&name)
        }
        FormatArg::Json => write_text(&a.out.out, &name, &serde_json::to_string_pretty(&r)?)?,
    };
    println!("wrote {}", path.display());
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<()> {
    let file = a.config.load()?;
    let (cfg, psi) = file.ingest()?;
    let mut run = RunOptions {
        models: vec![ModelTag::Floquet, ModelTag::Rwa, ModelTag::Trotter],
        trace: TraceSpec::default(),
        ..RunOptions::default()
    };
    a.run.apply(&mut run)?;
    let rep = experiments::compare_point(&cfg, &psi, &run).context("compare")?;
    println!("reference model: {}", rep.reference);
    for (m, asym) in &rep.asymmetry {
        println!("  {m:<12} sideband asymmetry {asym:+.6}");
    }
    println!(
        "  {:<12} {:>14} {:>12} {:>14} {:>12}",
        "model", "max |dw| (MHz)", "max |da|", "max rel da n=1", "trace sup"
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
    for d in &rep.deviations {
        println!(
            "  {:<12} {:>14.4e} {:>12.4e} {:>14} {:>12}",
            d.model.as_str(),
            angular_to_mhz(d.max_d_omega),
            d.max_d_amp,
            opt(d.max_rel_amp_n1),
            opt(d.trace_sup_norm)
        );
    }
    let p = write_text(&a.out, "compare.json", &rep.to_json()?)?;
    println!("wrote {}", p.display());
    Ok(())
}

fn list_scenarios() -> Result<()> {
    for name in experiments::SCENARIOS {
        let s = experiments::scenario(name)?;
        println!("{name:<18} {}", s.description);
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Evolve(a) => evolve(a),
        Command::Sweep(a) => sweep(a),
        Command::Scenario(a) => scenario(a),
        Command::Fit(a) => fit(a),
        Command::Compare(a) => compare(a),
        Command::ListScenarios => list_scenarios(),
    }
}

/// 1 for invalid input, 2 for solver failures.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(core) if !core.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::anyhow;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn k_flag_accepts_auto_and_integers() {
        assert_eq!(parse_k("auto"), Ok(KArg(None)));
        assert_eq!(parse_k("12"), Ok(KArg(Some(12))));
        assert!(parse_k("-3").is_err());
    }

    #[test]
    fn model_lists_parse() {
        let m = parse_models("floquet, rwa,trotter").unwrap();
        assert_eq!(m.0, vec![ModelTag::Floquet, ModelTag::Rwa, ModelTag::Trotter]);
        assert!(parse_models("floquet,bogus").is_err());
    }

    #[test]
    fn solver_errors_map_to_two() {
        let e = anyhow::Error::new(Error::NoConvergence { tol: 1e-8, k_max: 512 }).context("solve");
        assert_eq!(exit_code(&e), 2);
        let e = anyhow::Error::new(Error::UnknownScenario("x".into()));
        assert_eq!(exit_code(&e), 1);
        assert_eq!(exit_code(&anyhow!("bad flag")), 1);
    }
}
